#pragma once

#include "hrtfp/cap_harmonics.hpp"
#include "hrtfp/ear_patch.hpp"
#include "hrtfp/evaluation.hpp"
#include "hrtfp/hrtf.hpp"
#include "hrtfp/mesh.hpp"
#include "hrtfp/nn/train.hpp"
#include "hrtfp/sphere_map.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace hrtfp {

struct FeatureOptions {
  double crop_half_angle = deg2rad(30.0);
  CapSpec cap{deg2rad(25.0), 20};
  std::size_t grid_size = 9062;
  ParameterizeOptions parameterize;
};

/// Mesh -> per-ear SCH coefficients. The cap grid and its least-squares
/// factorization are built once and shared by every subject.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureOptions options = {});

  const FeatureOptions& options() const noexcept { return options_; }
  /// Ear-canal directions are physical, head-centered; cap-local azimuth zero
  /// points toward the image of the top of the head.
  std::array<EarFeatures, 2> operator()(const TriMesh& mesh, const Direction& left, const Direction& right) const;

 private:
  FeatureOptions options_;
  DirectionSet grid_;
  std::shared_ptr<const CapFitter> fitter_;
};

/// Magic "HRTFSCH1", then per ear u32 rows, u32 cols and f64 values
/// column-major.
void write_features(const std::filesystem::path& path, const std::array<EarFeatures, 2>& features);
std::array<EarFeatures, 2> read_features(const std::filesystem::path& path);

struct TargetOptions {
  std::vector<double> freqs = log_frequencies();
  int magnitude_order = 7;
  int onset_order = 5;
  MagnitudeOptions magnitude;
  OnsetOptions onset;
};

/// What held-out predictions are scored against: frequency-normalized dB
/// magnitudes and detected onsets on the measured directions.
struct SubjectReference {
  DirectionSet directions;
  MagnitudeTensor magnitude;
  OnsetField onsets;
};

ShTargets compute_targets(const HrirArchive& archive, double norm_factor, const TargetOptions& options = {},
                          SubjectReference* reference = nullptr);

/// One subject as the learning stage sees it.
struct SubjectData {
  std::string id;
  Eigen::VectorXd anthro;              // 13 measurements
  std::array<Eigen::MatrixXd, 2> sch;  // 441 x 3 per ear
  ShTargets targets;
  SubjectReference reference;
};

/// Per-feature z-scoring. Spreads are floored at 1e-3 of the largest one (all
/// scales are 1 when every feature is constant).
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  /// samples: features x observations.
  static Standardizer fit(const Eigen::MatrixXd& samples);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

struct LearnConfig {
  nn::TrainConfig train;
  nn::NetShape shape;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// A trained network pair plus the training-fold statistics needed to use it.
/// Targets are learned as (target - training mean) / scale, one scale per
/// network.
struct TrainedModel {
  nn::ModelParams magnitude;
  nn::ModelParams onset;
  Standardizer anthro;
  Standardizer sch;                               // flattened 441 x 3, column-major
  std::array<Eigen::MatrixXd, 2> magnitude_mean;  // 41 x 64 per ear
  std::array<Eigen::VectorXd, 2> onset_mean;      // 36 per ear
  double magnitude_scale = 1.0;
  double onset_scale = 1.0;
  nn::LossHistory magnitude_history;
  nn::LossHistory onset_history;
};

/// Trains both networks on `train`, picking snapshots on `validation` (may be
/// null). Network seeds derive from `seed`.
TrainedModel train_models(const std::vector<const SubjectData*>& train, const SubjectData* validation,
                          const LearnConfig& config, std::uint64_t seed);

/// Writes <stem>_magnitude.hnn, <stem>_onset.hnn, <stem>_model.json and the
/// two loss histories as <stem>_{magnitude,onset}_loss.csv.
void write_model(const std::filesystem::path& stem, const TrainedModel& model);
TrainedModel read_model(const std::filesystem::path& stem);

/// Predicted SH targets of one subject (smoothing fields zero).
ShTargets predict(const TrainedModel& model, const SubjectData& subject);
/// Average targets of the given subjects: the mean predictor.
ShTargets mean_targets(const std::vector<const SubjectData*>& subjects);

/// Scores predicted targets against the subject's reference.
SubjectReport evaluate(const SubjectData& subject, const ShTargets& prediction);

struct FoldResult {
  std::string held_out;
  std::string validation;
  TrainedModel model;
  ShTargets prediction;
  ShTargets baseline;
  SubjectReport report;
  SubjectReport baseline_report;
  std::string error;  // empty on success
};

/// Fold i holds out subject i and validates on subject (i + N/2) mod N; the
/// baseline is the mean of all N - 1 remaining subjects. Folds run on up to
/// config.jobs threads and do not share state, so results do not depend on
/// the job count. A failing fold records its error and the others continue.
std::vector<FoldResult> loocv(const std::vector<SubjectData>& subjects, const LearnConfig& config);

/// Deterministic 64-bit mix used to derive per-fold seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace hrtfp
