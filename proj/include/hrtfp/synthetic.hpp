#pragma once

#include "hrtfp/anthro.hpp"
#include "hrtfp/directions.hpp"
#include "hrtfp/hrtf.hpp"
#include "hrtfp/mesh.hpp"

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace hrtfp {

inline constexpr double kSpeedOfSound = 343.0;

/// Pressure on a rigid sphere of radius a at the surface point `ear` for a
/// plane wave arriving from `source`, relative to the free-field pressure at
/// the sphere center. Returned in the DFT sign convention
/// (X(f) = sum x[n] e^{-i 2 pi f n / fs}), so a delay of tau multiplies by
/// e^{-i 2 pi f tau}. Terms are summed until they drop below 1e-10 of the
/// running sum; ConvergenceError if that takes more than ka + 200 terms.
std::vector<std::complex<double>> sphere_hrtf(double a, const Direction& ear, const Direction& source,
                                              const std::vector<double>& freqs,
                                              double c = kSpeedOfSound);

/// Woodworth ITD in microseconds for a lateral angle measured from the
/// median plane, positive toward the right ear: (a/c)(angle + sin angle).
/// With ITD = left onset - right onset this is positive for right-hand
/// sources. Classical branch, |angle| <= pi/2.
double woodworth_itd(double a, double lateral_angle, double c = kSpeedOfSound);

/// Lateral angle (positive to the right) of a direction in the head frame.
double lateral_angle(const Direction& d);

struct SphereSubjectSpec {
  std::string subject_id = "S01";
  double radius = 0.0875;
  /// Ears sit at azimuth 90 + ear_back_deg (left) and 270 - ear_back_deg
  /// (right), elevation -ear_down_deg.
  double ear_back_deg = 0.0;
  double ear_down_deg = 0.0;
  double bump_height = 0.01;           // meters, < radius / 4
  double bump_width_deg = 20.0;        // angular half-width of the taper
  std::uint64_t seed = 1;              // jitter of the derived measurements

  Direction left_ear() const;
  Direction right_ear() const;
  void validate() const;
};

struct SyntheticOptions {
  double sample_rate = 44100.0;
  int ir_length = 256;
  int generation_fft = 512;     // DFT grid of the synthesized spectra
  double bulk_delay = 64.0;     // samples, arrival time of the sphere center
  double rolloff_start = 18000.0;  // raised-cosine taper to zero at Nyquist
  int mesh_level = 4;           // icosphere subdivisions (2562 vertices)
  double speed_of_sound = kSpeedOfSound;
};

struct SyntheticSubject {
  HrirArchive archive;
  TriMesh mesh;
  AnthroRecord anthro;
  Direction left_ear;
  Direction right_ear;
};

/// HRIRs from the sphere series on the DFT grid with the bulk delay; mesh is
/// an icosphere of the given radius with a raised-cosine bump centered on
/// each ear axis; 13 measurements x1..x13 derived from the subject parameters.
SyntheticSubject gen_subject(const SphereSubjectSpec& spec, const DirectionSet& dirs,
                             const SyntheticOptions& options = {});

/// Triangle mesh of the bumped sphere alone.
TriMesh sphere_subject_mesh(const SphereSubjectSpec& spec, int level = 4);

/// x1..x13 derived from the subject parameters (head width/height/depth, ear offsets, bump
/// size, and smooth functions of the radius), with +-1% deterministic jitter.
AnthroRecord sphere_subject_anthro(const SphereSubjectSpec& spec);

/// n subjects with radii evenly spaced over [r_min, r_max] and ear offsets
/// and bumps drawn from the seed.
std::vector<SphereSubjectSpec> sphere_population(int n, std::uint64_t seed, double r_min = 0.080,
                                                 double r_max = 0.095);

}  // namespace hrtfp
