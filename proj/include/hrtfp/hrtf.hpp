#pragma once

#include "hrtfp/directions.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace hrtfp {

inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;

/// Raw impulse responses of one subject: irs[ear] is directions x taps.
struct HrirArchive {
  std::string subject_id;
  double sample_rate = 0.0;
  DirectionSet directions;
  std::array<Eigen::MatrixXd, 2> irs;

  Eigen::Index ir_length() const { return irs[0].cols(); }
  /// Throws DimensionError / DomainError on inconsistent contents.
  void validate() const;
};

/// Writes <stem>.json (subject_id, sample_rate, ir_length, blob file name,
/// directions as [azimuth_deg, elevation_deg]) and <stem>.f32 holding
/// little-endian float32 samples laid out [direction][ear][sample].
void write_archive(const std::filesystem::path& stem, const HrirArchive& archive);
/// Reads the manifest written by write_archive (path to the .json file).
HrirArchive read_archive(const std::filesystem::path& manifest);

/// n geometric frequencies with both endpoints included.
std::vector<double> log_frequencies(double f_lo = 170.0, double f_hi = 17000.0, int n = 41);

struct MagnitudeOptions {
  std::size_t min_fft = 4096;
  double db_floor = -100.0;
};

/// dB magnitudes: db[ear] is directions x frequencies.
struct MagnitudeTensor {
  std::vector<double> freqs;
  std::array<Eigen::MatrixXd, 2> db;
};

/// Spectrum of every IR, zero-padded to the next power of two >= max(min_fft,
/// IR length); magnitude interpolated linearly in log frequency at f / factor
/// for each target f, then converted to dB and floored. A factor above one
/// (a larger head than the reference) thus reads the subject's spectrum at
/// lower frequencies. Throws DomainError if f / factor exceeds Nyquist.
MagnitudeTensor magnitude_extract(const HrirArchive& archive, double factor,
                                  const std::vector<double>& freqs = log_frequencies(),
                                  MagnitudeOptions options = {});

/// Per-frequency SH fits of the dB patterns.
struct MagnitudeTargets {
  int order = 7;
  std::array<Eigen::MatrixXd, 2> coeffs;  // frequencies x (L+1)^2
  std::array<double, 2> smoothing_lsd{};  // dB, input vs reconstruction
};
MagnitudeTargets magnitude_sh_targets(const MagnitudeTensor& tensor, const DirectionSet& dirs,
                                      int order = 7);
/// dB patterns (directions x frequencies) from per-frequency coefficients.
Eigen::MatrixXd reconstruct_magnitudes(const Eigen::MatrixXd& coeffs, const DirectionSet& dirs);

struct OnsetOptions {
  int upsample = 10;
  double threshold = 0.1;  // fraction of the absolute peak
};

/// Onsets in microseconds, one vector per ear, plus the directions excluded
/// from evaluation (the bottom pole).
struct OnsetField {
  std::array<Eigen::VectorXd, 2> onsets_us;
  std::vector<char> excluded;
};

/// Band-limited (FFT zero-padding) upsampling of one signal by `factor`.
Eigen::VectorXd sinc_upsample(const Eigen::VectorXd& x, int factor);

/// Onset of one IR in samples (fractional): first crossing of threshold *
/// peak of the upsampled magnitude, refined linearly between upsampled
/// ticks. Throws DomainError if the peak is below 10x the RMS of the first
/// 10% of the samples.
double onset_samples(const Eigen::VectorXd& ir, const OnsetOptions& options = {});

/// Elevation -90 deg flags; at most one direction sits there.
std::vector<char> bottom_pole_mask(const DirectionSet& dirs);

OnsetField detect_onsets(const HrirArchive& archive, OnsetOptions options = {});

/// ITD = onset_left - onset_right, microseconds (positive for sources on the
/// right).
Eigen::VectorXd itd_from_onsets(const OnsetField& field);

struct OnsetTargets {
  int order = 5;
  std::array<Eigen::VectorXd, 2> coeffs;  // (L+1)^2 each
  std::array<double, 2> smoothing_us{};   // mean |error| over evaluated directions
};
/// The excluded pole stays in the fit and is left out of the smoothing error.
OnsetTargets onset_sh_targets(const OnsetField& field, const DirectionSet& dirs, int order = 5);

/// Training targets of one subject.
struct ShTargets {
  double norm_factor = 1.0;
  MagnitudeTargets magnitude;
  OnsetTargets onset;
};

/// Little-endian binary: magic "HRTFTGT1", then the fields in declaration
/// order with u32 dimensions and f64 values.
void write_targets(const std::filesystem::path& path, const ShTargets& targets);
ShTargets read_targets(const std::filesystem::path& path);

}  // namespace hrtfp
