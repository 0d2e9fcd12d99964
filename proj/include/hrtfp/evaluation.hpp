#pragma once

#include "hrtfp/directions.hpp"
#include "hrtfp/hrtf.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace hrtfp {

enum class MagnitudeScale { kLinear, kDecibel };

/// Log-spectral distortion of one ear over directions x frequencies.
struct LsdReport {
  double global = 0.0;            // dB
  Eigen::VectorXd per_direction;  // RMS over frequencies
  Eigen::VectorXd per_frequency;  // RMS over directions
};

/// sqrt(mean over all entries of (20 log10 |H / Hhat|)^2). Linear inputs must
/// be positive (DomainError otherwise); dB inputs are differenced directly.
LsdReport lsd(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& predicted,
              MagnitudeScale scale = MagnitudeScale::kLinear);

struct OnsetReport {
  std::array<Eigen::VectorXd, 2> onset_error_us;  // |predicted - reference| per direction
  Eigen::VectorXd itd_error_us;
  std::vector<char> excluded;                      // left out of the statistics
  std::array<double, 2> onset_mean_us{};
  std::array<double, 2> onset_std_us{};
  double itd_mean_us = 0.0;
  double itd_std_us = 0.0;
};

/// Absolute onset and ITD errors; means and population standard deviations
/// skip the reference's excluded directions unless apply_exclusion is false.
/// DimensionError when the fields cover different direction counts.
OnsetReport onset_itd_errors(const OnsetField& predicted, const OnsetField& reference,
                             bool apply_exclusion = true);

/// Everything reported for one held-out subject.
struct SubjectReport {
  std::string subject_id;
  DirectionSet directions;
  std::vector<double> freqs;
  std::array<LsdReport, 2> lsd;
  OnsetReport onset;
  std::array<double, 2> smoothing_lsd_db{};
  std::array<double, 2> smoothing_onset_us{};
};

/// Writes <id>_lsd_direction.csv, <id>_lsd_frequency.csv and <id>_onset.csv
/// per subject plus summary.csv (one row per subject, header only when the
/// list is empty). Floats use 9 significant digits. Returns the files written.
std::vector<std::filesystem::path> emit_report(const std::vector<SubjectReport>& reports,
                                               const std::filesystem::path& out_dir);

/// Column means of the summary rows.
struct SummaryMeans {
  std::array<double, 2> lsd_db{};
  std::array<double, 2> onset_us{};
  double itd_us = 0.0;

  double lsd_mean() const { return 0.5 * (lsd_db[0] + lsd_db[1]); }
};
SummaryMeans summary_means(const std::vector<SubjectReport>& reports);

}  // namespace hrtfp
