#pragma once

#include "hrtfp/nn/networks.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hrtfp::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long step = 0;
};

AdamState adam_init(const ModelParams& p);
/// Bias-corrected Adam update; DomainError on a non-finite gradient (the
/// parameters are left untouched).
void adam_step(ModelParams& p, const ModelParams& grads, AdamState& state, const AdamOptions& options = {});

/// Rows of (input, target) pairs for one network.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual NetKind kind() const = 0;
  /// Mean squared error over the rows; adds the gradient of that mean to
  /// grads when given.
  virtual double loss(const ModelParams& p, const std::vector<std::size_t>& rows, ModelParams* grads) const = 0;
  /// outputs x rows.
  virtual Eigen::MatrixXd predict(const ModelParams& p, const std::vector<std::size_t>& rows) const = 0;

  std::vector<std::size_t> all_rows() const;
};

class MagnitudeDataset : public Dataset {
 public:
  struct Row {
    int sch = 0;              // index into encoder inputs
    Eigen::VectorXd anthro;   // 13
    int freq = 0;             // 0..40
    int ear = 0;              // 0 left, 1 right
    Eigen::VectorXd target;   // 64
  };
  std::vector<Eigen::MatrixXd> sch;  // 3 x 441 (channels x length)
  std::vector<Row> rows;

  std::size_t size() const override { return rows.size(); }
  NetKind kind() const override { return NetKind::kMagnitude; }
  double loss(const ModelParams& p, const std::vector<std::size_t>& idx, ModelParams* grads) const override;
  Eigen::MatrixXd predict(const ModelParams& p, const std::vector<std::size_t>& idx) const override;
  MagnitudeBatch batch(const std::vector<std::size_t>& idx) const;
};

class OnsetDataset : public Dataset {
 public:
  struct Row {
    Eigen::VectorXd anthro;  // 13
    int ear = 0;
    Eigen::VectorXd target;  // 36
  };
  std::vector<Row> rows;

  std::size_t size() const override { return rows.size(); }
  NetKind kind() const override { return NetKind::kOnset; }
  double loss(const ModelParams& p, const std::vector<std::size_t>& idx, ModelParams* grads) const override;
  Eigen::MatrixXd predict(const ModelParams& p, const std::vector<std::size_t>& idx) const override;
  OnsetBatch batch(const std::vector<std::size_t>& idx) const;
};

struct TrainConfig {
  int batch_size = 1024;
  int epochs = 1000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  void validate() const;
};

struct LossHistory {
  std::vector<double> train;  // mean over the epoch's batches, before each update
  std::vector<double> val;    // after the epoch; empty without a validation set
  int best_epoch = 0;         // 1-based
};

struct TrainResult {
  ModelParams best;
  LossHistory history;
};

/// Shuffled mini-batch Adam from `init`. The snapshot with the lowest
/// validation loss (training loss without a validation set) is returned,
/// earliest epoch on ties. Training is single threaded and bit-reproducible.
TrainResult train(const Dataset& train_set, const Dataset* val_set, ModelParams init, const TrainConfig& config);

/// epoch,train_loss,val_loss with 9 significant digits.
void write_history_csv(const std::filesystem::path& path, const LossHistory& history);

/// Deterministic Fisher-Yates permutation built from raw 64-bit draws.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t& state);

}  // namespace hrtfp::nn
