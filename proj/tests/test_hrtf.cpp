#include "doctest.h"

#include "hrtfp/errors.hpp"
#include "hrtfp/hrtf.hpp"
#include "hrtfp/spherical_harmonics.hpp"
#include "hrtfp/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <bit>
#include <fstream>
#include <random>

using namespace hrtfp;

namespace {

HrirArchive impulse_archive(const DirectionSet& dirs, int length, int at, double gain = 1.0) {
  HrirArchive a;
  a.subject_id = "imp";
  a.sample_rate = 44100.0;
  a.directions = dirs;
  for (auto& m : a.irs) {
    m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dirs.size()), length);
    m.col(at).setConstant(gain);
  }
  return a;
}

// Periodic band-limited interpolant of a unit impulse at t0 on M samples with
// the Nyquist bin split evenly: sin(pi u) cot(pi u / M) / M.
double impulse_interpolant(double t, double t0, int m) {
  const double u = t - t0;
  if (std::abs(u) < 1e-12) return 1.0;
  return std::sin(kPi * u) / std::tan(kPi * u / m) / m;
}

// First time |interpolant| reaches `level`, scanned densely then bisected.
double oracle_crossing(double t0, int m, double level) {
  const double step = 1e-3;
  double t = 0.0;
  while (std::abs(impulse_interpolant(t + step, t0, m)) < level) t += step;
  double lo = t, hi = t + step;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::abs(impulse_interpolant(mid, t0, m)) < level ? lo : hi) = mid;
  }
  return hi;
}

Eigen::VectorXd random_coeffs(int order, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::VectorXd c(sh_count(order));
  for (auto& v : c) v = n(rng);
  return c;
}

}  // namespace

TEST_CASE("log frequency grid") {
  const auto f = log_frequencies();
  REQUIRE(f.size() == 41);
  CHECK(f.front() == 170.0);
  CHECK(f.back() == 17000.0);
  for (std::size_t i = 1; i < f.size(); ++i) {
    CHECK(f[i] > f[i - 1]);
    CHECK(f[i] / f[i - 1] == doctest::Approx(std::pow(100.0, 1.0 / 40.0)).epsilon(1e-12));
  }
}

TEST_CASE("magnitude_extract: impulse, gain, delay") {
  const auto dirs = ring_grid(440);
  const auto unit = magnitude_extract(impulse_archive(dirs, 256, 0), 1.0);
  REQUIRE(unit.db[0].rows() == 440);
  REQUIRE(unit.db[0].cols() == 41);
  CHECK(unit.db[0].cwiseAbs().maxCoeff() < 1e-9);
  CHECK(unit.db[1].cwiseAbs().maxCoeff() < 1e-9);

  const auto twice = magnitude_extract(impulse_archive(dirs, 256, 0, 2.0), 1.0);
  CHECK((twice.db[0].array() - 20.0 * std::log10(2.0)).abs().maxCoeff() < 1e-9);
  CHECK(20.0 * std::log10(2.0) == doctest::Approx(6.0206).epsilon(1e-5));

  const auto delayed = magnitude_extract(impulse_archive(dirs, 256, 37), 1.0);
  CHECK(delayed.db[1].cwiseAbs().maxCoeff() < 1e-9);

  // zero IR hits the floor
  auto silent = impulse_archive(dirs, 256, 0, 0.0);
  CHECK(magnitude_extract(silent, 1.0).db[0].maxCoeff() == -100.0);
}

TEST_CASE("magnitude_extract is delay invariant on sphere HRIRs") {
  const DirectionSet dirs({Direction::from_degrees(30, 10), Direction::from_degrees(250, -40)});
  const auto sub = gen_subject(SphereSubjectSpec{}, dirs);
  auto shifted = sub.archive;
  for (int ear = 0; ear < 2; ++ear) {
    shifted.irs[ear] = Eigen::MatrixXd::Zero(2, 256 + 11);
    shifted.irs[ear].rightCols(256) = sub.archive.irs[ear];
  }
  const auto a = magnitude_extract(sub.archive, 1.0);
  const auto b = magnitude_extract(shifted, 1.0);
  CHECK((a.db[0] - b.db[0]).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.db[1] - b.db[1]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("magnitude_extract: factor scaling and Nyquist") {
  // a two-tap filter has |H(f)| = |1 + e^{-i 2 pi f / fs}| = 2|cos(pi f / fs)|
  const DirectionSet dirs({Direction::from_degrees(0, 0)});
  auto a = impulse_archive(dirs, 64, 0);
  for (auto& m : a.irs) m(0, 1) = 1.0;
  const double factor = 1.3;
  const auto t = magnitude_extract(a, factor);
  for (std::size_t i = 0; i < t.freqs.size(); ++i) {
    const double f = t.freqs[i] / factor;
    const double expect = 20.0 * std::log10(2.0 * std::cos(kPi * f / 44100.0));
    CHECK(t.db[0](0, static_cast<Eigen::Index>(i)) == doctest::Approx(expect).epsilon(1e-3));
  }
  CHECK_THROWS_AS(magnitude_extract(a, 0.3), DomainError);
  CHECK_THROWS_AS(magnitude_extract(a, 0.0), DomainError);
}

TEST_CASE("magnitude SH targets: constant pattern and round trip") {
  const auto dirs = ring_grid(440);
  MagnitudeTensor t;
  t.freqs = log_frequencies();
  t.db[0] = Eigen::MatrixXd::Constant(440, 41, -3.0);
  t.db[1] = Eigen::MatrixXd::Constant(440, 41, 2.0);
  const auto c = magnitude_sh_targets(t, dirs);
  REQUIRE(c.coeffs[0].rows() == 41);
  REQUIRE(c.coeffs[0].cols() == 64);
  CHECK(c.coeffs[0].col(0).array().isApprox(Eigen::ArrayXd::Constant(41, -3.0 * std::sqrt(4.0 * kPi)), 1e-12));
  CHECK(c.coeffs[1].rightCols(63).cwiseAbs().maxCoeff() < 1e-10);

  std::mt19937_64 rng(7);
  Eigen::MatrixXd truth(41, 64);
  for (Eigen::Index k = 0; k < 41; ++k) truth.row(k) = random_coeffs(7, rng).transpose();
  const auto y = real_sh_basis(7, dirs).values;
  t.db[0] = y * truth.transpose();
  t.db[1] = -t.db[0];
  const auto r = magnitude_sh_targets(t, dirs);
  CHECK((r.coeffs[0] - truth).norm() / truth.norm() < 1e-8);
  CHECK((r.coeffs[1] + truth).norm() / truth.norm() < 1e-8);
  CHECK(r.smoothing_lsd[0] < 1e-8);
  CHECK((reconstruct_magnitudes(r.coeffs[0], dirs) - t.db[0]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("onset of an impulse matches the band-limited interpolant") {
  const double fs = 44100.0;
  for (int length : {512, 300}) {
    Eigen::VectorXd ir = Eigen::VectorXd::Zero(length);
    ir[256] = 1.0;
    const double got = onset_samples(ir);
    const int m = static_cast<int>(std::bit_ceil(static_cast<unsigned>(2 * length)));
    const double expect = oracle_crossing(256.0, m, 0.1);
    CHECK(std::abs(got - expect) * 1e6 / fs < 1e6 / (10.0 * fs));
    // the sidelobes make the 10% crossing precede the impulse by ~2.5 samples
    CHECK(expect < 256.0);
    CHECK(expect > 253.0);
  }
  // a peak much larger than any sidelobe leaves the onset on the main lobe
  OnsetOptions strict;
  strict.threshold = 0.5;
  Eigen::VectorXd ir = Eigen::VectorXd::Zero(512);
  ir[256] = 1.0;
  CHECK(std::abs(onset_samples(ir, strict) - oracle_crossing(256.0, 1024, 0.5)) < 0.1);
}

TEST_CASE("onsets are shift equivariant") {
  const auto dirs = ring_grid(440);
  const auto sub = gen_subject(SphereSubjectSpec{}, dirs);
  auto shifted = sub.archive;
  for (int ear = 0; ear < 2; ++ear) {
    shifted.irs[ear].setZero();
    shifted.irs[ear].rightCols(255) = sub.archive.irs[ear].leftCols(255);
  }
  const auto a = detect_onsets(sub.archive);
  const auto b = detect_onsets(shifted);
  const double sample_us = 1e6 / 44100.0;
  for (int ear = 0; ear < 2; ++ear) {
    CHECK(((b.onsets_us[ear] - a.onsets_us[ear]).array() - sample_us).abs().maxCoeff() < 1e-6);
    CHECK(a.onsets_us[ear].minCoeff() >= 0.0);
  }
}

TEST_CASE("onset precondition and pole mask") {
  Eigen::VectorXd noise = Eigen::VectorXd::Ones(256);
  CHECK_THROWS_AS(onset_samples(noise), DomainError);
  CHECK_THROWS_AS(onset_samples(Eigen::VectorXd::Zero(64)), DomainError);

  auto a = impulse_archive(ring_grid(440), 256, 100);
  a.irs[kRight].row(17).setConstant(0.5);
  try {
    detect_onsets(a);
    FAIL("flat IR accepted");
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("direction 17") != std::string::npos);
    CHECK(msg.find("right") != std::string::npos);
  }

  const auto mask = bottom_pole_mask(ring_grid(440));
  CHECK(std::count(mask.begin(), mask.end(), 1) == 1);
  CHECK(mask.back() == 1);
}

TEST_CASE("ITD on the sphere: Woodworth, median plane, mirror") {
  std::vector<Direction> v;
  for (int az = 0; az < 360; az += 15) v.push_back(Direction::from_degrees(az, 0));
  for (int el = -75; el <= 90; el += 15) {
    v.push_back(Direction::from_degrees(0, el));
    v.push_back(Direction::from_degrees(180, el));
  }
  const DirectionSet dirs(v);
  const double a = 0.0875;
  SphereSubjectSpec spec;
  spec.radius = a;
  const auto sub = gen_subject(spec, dirs);
  const auto itd = itd_from_onsets(detect_onsets(sub.archive));

  const double wood = a / kSpeedOfSound * (kPi / 2.0 + 1.0) * 1e6;
  CHECK(wood == doctest::Approx(655.8).epsilon(1e-4));
  // azimuth 90 is on the left: negative under left - right
  CHECK(std::abs(-itd[6] - wood) < 0.1 * wood);
  CHECK(std::abs(itd[18] - wood) < 0.1 * wood);
  CHECK(std::abs(itd[6] + itd[18]) < 5.0);
  for (std::size_t i = 0; i < 24; ++i) CHECK(std::abs(itd[i] + itd[(24 - i) % 24]) < 5.0);
  for (std::size_t i = 24; i < dirs.size(); ++i) CHECK(std::abs(itd[i]) < 15.0);
}

TEST_CASE("onset SH targets: constant, round trip, exclusion") {
  const auto dirs = ring_grid(440);
  OnsetField f;
  f.excluded = bottom_pole_mask(dirs);
  f.onsets_us[0] = Eigen::VectorXd::Constant(440, 1500.0);
  f.onsets_us[1] = Eigen::VectorXd::Constant(440, 1400.0);
  const auto c = onset_sh_targets(f, dirs);
  REQUIRE(c.coeffs[0].size() == 36);
  CHECK(c.coeffs[0][0] == doctest::Approx(1500.0 * std::sqrt(4.0 * kPi)));
  CHECK(c.coeffs[1].tail(35).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(itd_from_onsets(f).cwiseAbs().maxCoeff() == doctest::Approx(100.0));

  std::mt19937_64 rng(3);
  const Eigen::VectorXd truth = random_coeffs(5, rng);
  const auto y = real_sh_basis(5, dirs).values;
  f.onsets_us[0] = y * truth;
  f.onsets_us[1] = 2.0 * f.onsets_us[0];
  const auto r = onset_sh_targets(f, dirs);
  CHECK((r.coeffs[0] - truth).norm() / truth.norm() < 1e-8);
  CHECK((r.coeffs[1] - 2.0 * truth).norm() / truth.norm() < 1e-8);

  // an outlier at the pole distorts the fit but is not counted
  f.onsets_us[0][439] += 5000.0;
  const auto with = onset_sh_targets(f, dirs);
  const Eigen::VectorXd err = (y * with.coeffs[0] - f.onsets_us[0]).cwiseAbs();
  CHECK(with.smoothing_us[0] == doctest::Approx(err.head(439).mean()).epsilon(1e-12));
  CHECK(with.smoothing_us[0] < err.mean());
}

TEST_CASE("sphere smoothing floors") {
  const auto dirs = ring_grid(440);
  const auto sub = gen_subject(SphereSubjectSpec{}, dirs);
  const auto mags = magnitude_extract(sub.archive, 1.0);
  const auto t = magnitude_sh_targets(mags, dirs);
  for (int ear = 0; ear < 2; ++ear) {
    const Eigen::MatrixXd rec = reconstruct_magnitudes(t.coeffs[ear], dirs);
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < mags.freqs.size(); ++k) {
      if (mags.freqs[k] > 8000.0) break;
      const auto col = static_cast<Eigen::Index>(k);
      sum += std::sqrt((rec.col(col) - mags.db[ear].col(col)).array().square().mean());
      ++count;
    }
    MESSAGE("ear " << ear << " smoothing LSD <= 8 kHz " << sum / count << " dB, all " << t.smoothing_lsd[ear]);
    CHECK(sum / count <= 1.0);
  }
  const auto onsets = onset_sh_targets(detect_onsets(sub.archive), dirs);
  MESSAGE("onset smoothing " << onsets.smoothing_us[0] << " / " << onsets.smoothing_us[1] << " us");
  CHECK(onsets.smoothing_us[0] < 20.0);
  CHECK(onsets.smoothing_us[1] < 20.0);
}

TEST_CASE("archive and target files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "hrtfp_test_hrtf";
  std::filesystem::create_directories(dir);
  const auto dirs = ring_grid(440);
  const auto sub = gen_subject(SphereSubjectSpec{}, dirs);
  write_archive(dir / "S01", sub.archive);
  const auto back = read_archive(dir / "S01.json");
  CHECK(back.subject_id == "S01");
  CHECK(back.sample_rate == 44100.0);
  REQUIRE(back.directions.size() == 440);
  for (std::size_t i = 0; i < 440; ++i) {
    CHECK(angular_distance(back.directions[i], dirs[i]) < 1e-12);
  }
  for (int ear = 0; ear < 2; ++ear) {
    CHECK((back.irs[ear] - sub.archive.irs[ear].cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  }
  // blob layout: [direction][ear][sample]
  {
    std::ifstream blob(dir / "S01.f32", std::ios::binary);
    blob.seekg((3 * 2 + 1) * 256 * 4 + 5 * 4);
    float v;
    blob.read(reinterpret_cast<char*>(&v), 4);
    CHECK(v == static_cast<float>(sub.archive.irs[kRight](3, 5)));
  }
  std::filesystem::resize_file(dir / "S01.f32", 100);
  CHECK_THROWS_AS(read_archive(dir / "S01.json"), ParseError);
  CHECK_THROWS_AS(read_archive(dir / "missing.json"), IoError);

  ShTargets t;
  t.norm_factor = 1.07;
  t.magnitude = magnitude_sh_targets(magnitude_extract(sub.archive, 1.0), dirs);
  t.onset = onset_sh_targets(detect_onsets(sub.archive), dirs);
  write_targets(dir / "t.bin", t);
  const auto r = read_targets(dir / "t.bin");
  CHECK(r.norm_factor == 1.07);
  CHECK(r.magnitude.order == 7);
  CHECK(r.onset.order == 5);
  for (int ear = 0; ear < 2; ++ear) {
    CHECK(r.magnitude.coeffs[ear] == t.magnitude.coeffs[ear]);
    CHECK(r.onset.coeffs[ear] == t.onset.coeffs[ear]);
    CHECK(r.magnitude.smoothing_lsd[ear] == t.magnitude.smoothing_lsd[ear]);
  }
  // determinism: identical archives give bit-identical targets
  const auto again = magnitude_sh_targets(magnitude_extract(sub.archive, 1.0), dirs);
  CHECK(again.coeffs[0] == t.magnitude.coeffs[0]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("archive validation") {
  auto a = impulse_archive(ring_grid(440), 64, 3);
  a.irs[1] = Eigen::MatrixXd::Zero(439, 64);
  CHECK_THROWS_AS(a.validate(), DimensionError);
  a = impulse_archive(ring_grid(440), 64, 3);
  a.sample_rate = 0.0;
  CHECK_THROWS_AS(a.validate(), DomainError);
}
