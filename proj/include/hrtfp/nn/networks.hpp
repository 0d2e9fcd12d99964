#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hrtfp::nn {

enum class NetKind { kMagnitude, kOnset };

inline constexpr int kFreqCount = 41;
inline constexpr int kAnthroCount = 13;
inline constexpr int kMagnitudeOutputs = 64;  // (7+1)^2
inline constexpr int kOnsetOutputs = 36;      // (5+1)^2

/// Convolution plans. The fixed contract is a 64-d encoder embedding, a 4 x 64
/// decoder input and a single-channel decoder output of length 64.
struct NetShape {
  std::vector<int> encoder_channels{3, 8, 16, 32, 32, 64, 64};
  int encoder_strided = 5;  // leading encoder layers with stride 2
  std::vector<int> decoder_channels{4, 16, 16, 8, 4, 1};
  int kernel = 3;           // odd; padding kernel / 2
  int sequence_length = 441;

  void validate() const;
  bool operator==(const NetShape&) const = default;
};

/// Parameter tensors in a fixed order: per layer the weight (out x in, or
/// out x in*kernel for convolutions) followed by the bias (out x 1).
struct ModelParams {
  NetKind kind = NetKind::kMagnitude;
  NetShape shape;
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> tensors;

  std::size_t count() const;  // scalar parameters
  /// Logical dimensions written to disk: convolution weights as
  /// (out, in, kernel), linear weights as (out, in), biases as (out).
  std::vector<std::vector<std::uint32_t>> file_dims() const;
  void set_zero();
  bool all_finite() const;
};

/// Uniform(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) weights, zero biases.
ModelParams init_params(NetKind kind, std::uint64_t seed, const NetShape& shape = {});
/// Same layout, every entry zero.
ModelParams zeros_like(const ModelParams& p);

/// One sample of the magnitude network.
struct MagnitudeNetInput {
  Eigen::MatrixXd sch_xyz;     // 441 x 3
  Eigen::VectorXd anthro;      // 13
  Eigen::VectorXd freq_onehot; // 41
  Eigen::VectorXd ear_onehot;  // 2
};

struct OnsetNetInput {
  Eigen::VectorXd anthro;      // 13
  Eigen::VectorXd ear_onehot;  // 2
};

/// Batched magnitude input. Encoder inputs are shared between rows (one per
/// subject and ear) and run once per batch.
struct MagnitudeBatch {
  std::vector<Eigen::MatrixXd> sch;  // unique encoder inputs, 3 x 441 (channels x length)
  std::vector<int> sch_of_row;
  Eigen::MatrixXd anthro;            // 13 x rows
  Eigen::MatrixXd freq;              // 41 x rows
  Eigen::MatrixXd ear;               // 2 x rows
  Eigen::Index rows() const { return anthro.cols(); }
};

struct OnsetBatch {
  Eigen::MatrixXd anthro;  // 13 x rows
  Eigen::MatrixXd ear;     // 2 x rows
  Eigen::Index rows() const { return anthro.cols(); }
};

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> cols;     // unfolded conv inputs
  std::vector<Eigen::MatrixXd> acts;     // post-activation outputs
  Eigen::MatrixXd pooled;                // encoder embeddings, 64 x unique
  Eigen::MatrixXd concat;                // fusion input
  Eigen::MatrixXd anthro, freq, ear;     // branch outputs
  Eigen::MatrixXd fusion;
  Eigen::MatrixXd decoded;               // 64 x rows before the onset output layer
};

/// 64 x rows.
Eigen::MatrixXd forward_magnitude(const ModelParams& p, const MagnitudeBatch& batch, ForwardCache* cache = nullptr);
/// 36 x rows.
Eigen::MatrixXd forward_onset(const ModelParams& p, const OnsetBatch& batch, ForwardCache* cache = nullptr);

Eigen::VectorXd forward_magnitude(const ModelParams& p, const MagnitudeNetInput& input);
Eigen::VectorXd forward_onset(const ModelParams& p, const OnsetNetInput& input);
MagnitudeBatch make_batch(const std::vector<MagnitudeNetInput>& inputs);
OnsetBatch make_batch(const std::vector<OnsetNetInput>& inputs);

/// Accumulates into grads the gradient of a loss whose derivative with
/// respect to the network output is d_out.
void backward_magnitude(const ModelParams& p, const MagnitudeBatch& batch, const ForwardCache& cache,
                        const Eigen::MatrixXd& d_out, ModelParams& grads);
void backward_onset(const ModelParams& p, const OnsetBatch& batch, const ForwardCache& cache,
                    const Eigen::MatrixXd& d_out, ModelParams& grads);

/// Magic "HRTFNN1\0", u32 version, u32 tensor count, then per tensor u32
/// rank, u32 dims and little-endian float32 values in row-major order.
void write_params(const std::filesystem::path& path, const ModelParams& p);
/// The network kind and plan are recovered from the tensor shapes.
ModelParams read_params(const std::filesystem::path& path);

}  // namespace hrtfp::nn
