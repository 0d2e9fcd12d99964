#include "hrtfp/synthetic.hpp"

#include "hrtfp/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

namespace hrtfp {

namespace {

using cd = std::complex<double>;

// Modal coefficients b_n = (2n+1) i^(n+1) / (x^2 h_n'(x)) of the surface
// pressure (e^{-i omega t} convention), up to the first n > x with
// |b_n| < tol * |running bound|.
std::vector<cd> modal_coefficients(double x, double tol, int max_terms) {
  std::vector<cd> b;
  const cd eix = std::polar(1.0, x);
  cd h_prev = eix / x;               // h_{-1}
  cd h = cd(0.0, -1.0) * eix / x;    // h_0
  cd ipow(0.0, 1.0);                 // i^(n+1)
  double scale = 0.0;
  for (int n = 0; n < max_terms; ++n) {
    const cd dh = h_prev - static_cast<double>(n + 1) / x * h;
    const cd bn = static_cast<double>(2 * n + 1) * ipow / (x * x * dh);
    b.push_back(bn);
    scale = std::max(scale, std::abs(bn));
    if (n > x && std::abs(bn) < tol * scale) return b;
    const cd h_next = static_cast<double>(2 * n + 1) / x * h - h_prev;
    h_prev = h;
    h = h_next;
    ipow *= cd(0.0, 1.0);
  }
  throw ConvergenceError("sphere series did not converge for ka = " + std::to_string(x) + " after " +
                         std::to_string(max_terms) + " terms");
}

// Legendre series sum_n b_n P_n(mu).
cd legendre_sum(const std::vector<cd>& b, double mu) {
  double p_prev = 1.0;
  double p = mu;
  cd s = b[0];
  if (b.size() > 1) s += b[1] * mu;
  for (std::size_t n = 1; n + 1 < b.size(); ++n) {
    const double p_next = ((2.0 * n + 1.0) * mu * p - n * p_prev) / (n + 1.0);
    p_prev = p;
    p = p_next;
    s += b[n + 1] * p;
  }
  return s;
}

// Direction-independent part shared by every direction of one subject.
std::vector<cd> surface_pressure(double a, double c, double f, double tol) {
  const double x = 2.0 * kPi * f * a / c;
  if (x == 0.0) return {};
  return modal_coefficients(x, tol, static_cast<int>(x) + 200);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<std::complex<double>> sphere_hrtf(double a, const Direction& ear, const Direction& source,
                                              const std::vector<double>& freqs, double c) {
  if (!(a > 0.0) || !(c > 0.0)) throw DomainError("sphere radius and speed of sound must be positive");
  // the incident wave travels along -source
  const double mu = -source.unit_vector().dot(ear.unit_vector());
  std::vector<cd> out;
  out.reserve(freqs.size());
  for (double f : freqs) {
    if (f < 0.0 || !std::isfinite(f)) throw DomainError("frequencies must be non-negative");
    if (f == 0.0) {
      out.emplace_back(1.0, 0.0);
      continue;
    }
    const double x = 2.0 * kPi * f * a / c;
    // running-sum truncation: stop once a term bound |b_n| >= |b_n P_n| is
    // below 1e-10 of the sum (P_n itself may vanish, e.g. odd n at mu = 0)
    const auto b = modal_coefficients(x, 1e-13, static_cast<int>(x) + 200);
    double p_prev = 1.0;
    double p = mu;
    cd s = b[0];
    std::size_t n = 1;
    for (; n < b.size(); ++n) {
      s += b[n] * p;
      if (static_cast<double>(n) > x && std::abs(b[n]) < 1e-10 * std::abs(s)) break;
      const double p_next = ((2.0 * n + 1.0) * mu * p - n * p_prev) / (n + 1.0);
      p_prev = p;
      p = p_next;
    }
    out.push_back(std::conj(s));
  }
  return out;
}

double woodworth_itd(double a, double lateral, double c) {
  if (std::abs(lateral) > kPi / 2.0 + 1e-12) throw DomainError("Woodworth branch needs |angle| <= pi/2");
  return a / c * (lateral + std::sin(lateral)) * 1e6;
}

double lateral_angle(const Direction& d) {
  return std::asin(std::clamp(-d.unit_vector().y(), -1.0, 1.0));
}

Direction SphereSubjectSpec::left_ear() const {
  return Direction::from_degrees(90.0 + ear_back_deg, -ear_down_deg);
}

Direction SphereSubjectSpec::right_ear() const {
  return Direction::from_degrees(270.0 - ear_back_deg, -ear_down_deg);
}

void SphereSubjectSpec::validate() const {
  if (!(radius > 0.0)) throw DomainError("subject radius must be positive");
  if (!(bump_height >= 0.0) || !(bump_height < radius / 4.0)) {
    throw DomainError("bump height must lie in [0, radius / 4)");
  }
  if (!(bump_width_deg > 0.0 && bump_width_deg < 90.0)) throw DomainError("bump width out of range");
  if (std::abs(ear_down_deg) >= 90.0 || std::abs(ear_back_deg) >= 90.0) {
    throw DomainError("ear offsets out of range");
  }
}

TriMesh sphere_subject_mesh(const SphereSubjectSpec& spec, int level) {
  spec.validate();
  auto mesh = icosphere(level, spec.radius);
  const double w = deg2rad(spec.bump_width_deg);
  for (const auto& ear : {spec.left_ear(), spec.right_ear()}) {
    const Eigen::Vector3d axis = ear.unit_vector();
    for (auto& v : mesh.vertices) {
      const double g = std::acos(std::clamp(v.normalized().dot(axis), -1.0, 1.0));
      if (g < w) v *= 1.0 + spec.bump_height * 0.5 * (1.0 + std::cos(kPi * g / w)) / v.norm();
    }
  }
  return mesh;
}

AnthroRecord sphere_subject_anthro(const SphereSubjectSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  auto jitter = [&] { return 1.0 + 0.02 * (uniform01(rng) - 0.5); };
  const double a = spec.radius;
  AnthroRecord r{spec.subject_id, default_anthro_columns(), Eigen::VectorXd(13)};
  r.values << 2.0 * a * jitter(),                                  // x1 head width
      2.0 * a * jitter(),                                          // x2 head height
      2.0 * a * jitter(),                                          // x3 head depth
      0.01 + a * std::sin(deg2rad(spec.ear_down_deg)),             // x4 pinna offset down
      0.01 + a * std::sin(deg2rad(spec.ear_back_deg)),             // x5 pinna offset back
      spec.bump_height,                                            // x6 pinna protrusion
      a * deg2rad(spec.bump_width_deg),                            // x7 pinna extent
      1.2 * a * jitter(),                                          // x8 neck width
      0.9 * a * jitter(),                                          // x9 neck height
      1.1 * a * jitter(),                                          // x10 neck depth
      4.6 * a * jitter(),                                          // x11 torso top width
      5.1 * a * jitter(),                                          // x12 torso top height
      2.0 * kPi * a * jitter();                                    // x13 head circumference
  return r;
}

SyntheticSubject gen_subject(const SphereSubjectSpec& spec, const DirectionSet& dirs,
                             const SyntheticOptions& options) {
  spec.validate();
  if (options.generation_fft < options.ir_length || options.generation_fft % 2 != 0) {
    throw DomainError("generation FFT must be even and at least the IR length");
  }
  const int nfft = options.generation_fft;
  const double fs = options.sample_rate;
  const double nyq = fs / 2.0;
  const int nbins = nfft / 2 + 1;

  std::vector<std::vector<cd>> coeffs(nbins);
  std::vector<double> taper(nbins);
  for (int k = 0; k < nbins; ++k) {
    const double f = fs * k / nfft;
    coeffs[k] = surface_pressure(spec.radius, options.speed_of_sound, f, 1e-13);
    taper[k] = f <= options.rolloff_start ? 1.0
                                          : 0.5 * (1.0 + std::cos(kPi * (f - options.rolloff_start) /
                                                                  (nyq - options.rolloff_start)));
  }

  SyntheticSubject out;
  out.left_ear = spec.left_ear();
  out.right_ear = spec.right_ear();
  out.archive.subject_id = spec.subject_id;
  out.archive.sample_rate = fs;
  out.archive.directions = dirs;
  const auto ndir = static_cast<Eigen::Index>(dirs.size());
  Eigen::FFT<double> fft;
  std::vector<cd> spectrum(nfft);
  std::vector<cd> time;
  for (int ear = 0; ear < 2; ++ear) {
    const Eigen::Vector3d e = (ear == kLeft ? out.left_ear : out.right_ear).unit_vector();
    out.archive.irs[ear].resize(ndir, options.ir_length);
    for (Eigen::Index d = 0; d < ndir; ++d) {
      const double mu = -dirs[static_cast<std::size_t>(d)].unit_vector().dot(e);
      for (int k = 0; k < nbins; ++k) {
        const cd p = coeffs[k].empty() ? cd(1.0, 0.0) : std::conj(legendre_sum(coeffs[k], mu));
        const cd delay = std::polar(1.0, -2.0 * kPi * k * options.bulk_delay / nfft);
        spectrum[k] = taper[k] * p * delay;
      }
      spectrum[nfft / 2] = spectrum[nfft / 2].real();
      for (int k = 1; k < nfft / 2; ++k) spectrum[nfft - k] = std::conj(spectrum[k]);
      fft.inv(time, spectrum);
      for (int t = 0; t < options.ir_length; ++t) out.archive.irs[ear](d, t) = time[t].real();
    }
  }
  out.mesh = sphere_subject_mesh(spec, options.mesh_level);
  out.anthro = sphere_subject_anthro(spec);
  return out;
}

std::vector<SphereSubjectSpec> sphere_population(int n, std::uint64_t seed, double r_min, double r_max) {
  if (n < 1) throw DomainError("population needs at least one subject");
  std::mt19937_64 rng(seed);
  std::vector<SphereSubjectSpec> out;
  for (int i = 0; i < n; ++i) {
    SphereSubjectSpec s;
    char id[16];
    std::snprintf(id, sizeof id, "S%02d", i + 1);
    s.subject_id = id;
    s.radius = n == 1 ? r_min : r_min + (r_max - r_min) * i / (n - 1);
    s.ear_back_deg = 15.0 * uniform01(rng);
    s.ear_down_deg = 12.0 * uniform01(rng);
    s.bump_height = 0.006 + 0.006 * uniform01(rng);
    s.bump_width_deg = 15.0 + 10.0 * uniform01(rng);
    s.seed = rng();
    out.push_back(s);
  }
  return out;
}

}  // namespace hrtfp
