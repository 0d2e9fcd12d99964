#include "doctest.h"

#include "hrtfp/cap_harmonics.hpp"
#include "hrtfp/errors.hpp"
#include "hrtfp/spherical_harmonics.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace hrtfp;

namespace {

// Direct 2F1 summation in long double for a fixed number of terms; an oracle
// independent of the degree recurrence used by the library.
long double direct_ferrers(long double nu, int m, long double x, int terms) {
  const long double z = (1.0L - x) / 2.0L;
  const long double a = m - nu;
  const long double b = m + nu + 1.0L;
  const long double c = m + 1.0L;
  long double term = 1.0L;
  long double sum = 1.0L;
  for (int n = 0; n < terms; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0L)) * z;
    sum += term;
  }
  long double pref = (m % 2) ? -1.0L : 1.0L;
  for (int j = -m + 1; j <= m; ++j) pref *= nu + j;
  for (int i = 1; i <= m; ++i) pref /= 2.0L * i;
  return pref * std::pow(1.0L - x * x, m / 2.0L) * sum;
}

// Polar rings with equally spaced azimuths: cos and sin columns of equal m
// have identical norms, which makes descriptors exactly rotation invariant.
DirectionSet ring_cap(double half_angle, int rings, int per_ring) {
  std::vector<Direction> dirs{Direction::from_polar(0.0, 0.0)};
  for (int r = 1; r <= rings; ++r) {
    const double theta = half_angle * r / rings;
    for (int j = 0; j < per_ring; ++j) {
      dirs.push_back(Direction::from_polar(theta, 2.0 * kPi * (j + 0.5 * (r % 2)) / per_ring));
    }
  }
  return DirectionSet(std::move(dirs));
}

DirectionSet fibonacci_cap(double half_angle, std::size_t n) {
  std::vector<Direction> dirs;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (i + 0.5) / static_cast<double>(n);
    const double ct = 1.0 - t * (1.0 - std::cos(half_angle));
    dirs.push_back(Direction::from_polar(std::acos(ct), golden * i));
  }
  return DirectionSet(std::move(dirs));
}

const double kCap25 = deg2rad(25.0);

}  // namespace

TEST_CASE("real-degree Legendre examples") {
  CHECK(legendre_real_degree(1.0, 0, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(legendre_real_degree(2.0, 1, 0.5) == doctest::Approx(assoc_legendre(2, 1, 0.5)).epsilon(1e-12));
  CHECK(legendre_real_degree(2.0, 1, 0.5) == doctest::Approx(-1.299038105676658).epsilon(1e-12));
  const double oracle = static_cast<double>(direct_ferrers(1.5L, 0, 0.9L, 200));
  CHECK(legendre_real_degree(1.5, 0, 0.9) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("real-degree Legendre agrees with integer degrees") {
  for (int l = 0; l <= 10; ++l) {
    for (int m = 0; m <= l; ++m) {
      for (double x : {-0.95, -0.4, 0.0, 0.3, 0.77, 0.999, 1.0}) {
        const double ref = assoc_legendre(l, m, x);
        const double got = legendre_real_degree(static_cast<double>(l), m, x);
        const double scale = std::max(std::abs(ref), 1e-300);
        const bool ok = std::abs(got - ref) <= 1e-10 * scale || std::abs(got - ref) < 1e-13;
        CHECK_MESSAGE(ok, "l=" << l << " m=" << m << " x=" << x);
      }
    }
  }
}

TEST_CASE("degree recurrence matches the direct series at moderate degree") {
  for (auto [nu, m, x] : {std::tuple{7.3, 2, 0.95}, std::tuple{12.71, 5, 0.93},
                         std::tuple{4.2, 0, 0.6}, std::tuple{9.9, 3, 0.98}}) {
    const double oracle = static_cast<double>(direct_ferrers(nu, m, x, 400));
    CHECK(legendre_real_degree(nu, m, x) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("real-degree Legendre domain checks") {
  CHECK_THROWS_AS(legendre_real_degree(1.5, 0, -1.0), DomainError);
  CHECK_THROWS_AS(legendre_real_degree(1.5, 0, 1.2), DomainError);
  CHECK_THROWS_AS(legendre_real_degree(1.5, 2, 0.5), DomainError);
}

TEST_CASE("hemisphere degrees are the integers") {
  // alternating rim conditions pick up every integer degree, the Neumann
  // family only those even about the equator
  for (int m = 0; m <= 6; ++m) {
    const auto alt = solve_cap_degrees(kPi / 2.0, m, 8, CapFamilies::kAlternating);
    const auto neu = solve_cap_degrees(kPi / 2.0, m, 8, CapFamilies::kNeumann);
    REQUIRE(alt.size() == static_cast<std::size_t>(9 - m));
    REQUIRE(neu.size() == alt.size());
    for (std::size_t i = 0; i < alt.size(); ++i) {
      CHECK(alt[i].degree == doctest::Approx(static_cast<double>(alt[i].k)).epsilon(1e-10));
      CHECK(neu[i].degree ==
            doctest::Approx(static_cast<double>(m + 2 * (neu[i].k - m))).epsilon(1e-10));
      CHECK(alt[i].residual < 1e-8);
      CHECK(neu[i].residual < 1e-8);
      CHECK(neu[i].family == BoundaryFamily::kDerivative);
    }
  }
  for (auto fam : {CapFamilies::kAlternating, CapFamilies::kNeumann}) {
    const auto first = solve_cap_degrees(kPi / 2.0, 0, 0, fam);
    REQUIRE(first.size() == 1);
    CHECK(first[0].degree == 0.0);
    CHECK(first[0].family == BoundaryFamily::kDerivative);
  }
}

TEST_CASE("25 degree cap degrees increase and satisfy boundary conditions") {
  for (auto fam : {CapFamilies::kAlternating, CapFamilies::kNeumann}) {
  const auto row = solve_cap_degrees(kCap25, 0, 2, fam);
  REQUIRE(row.size() == 3);
  CHECK(row[0].degree < row[1].degree);
  CHECK(row[1].degree < row[2].degree);
  CHECK(row[1].family == (fam == CapFamilies::kAlternating ? BoundaryFamily::kValue
                                                             : BoundaryFamily::kDerivative));
  for (const auto& e : row) {
    // re-evaluate the rim condition independently of the stored residual
    const double x = std::cos(kCap25);
    if (e.family == BoundaryFamily::kValue) {
      CHECK(std::abs(boundary_functional(e.family, e.degree, 0, kCap25)) < 1e-8);
      CHECK(std::abs(legendre_real_degree(e.degree, 0, x)) < 1e-8);
    } else {
      // central difference of P in theta at the rim
      const double h = 1e-6;
      const double d = (legendre_real_degree(e.degree, 0, std::cos(kCap25 + h)) -
                        legendre_real_degree(e.degree, 0, std::cos(kCap25 - h))) /
                       (2 * h);
      CHECK(std::abs(d) < 1e-6);
    }
  }
  }
  const auto single = solve_cap_degrees(kCap25, 3, 3);
  REQUIRE(single.size() == 1);
  CHECK(single[0].k == 3);
  CHECK(single[0].m == 3);
}

TEST_CASE("degree table at K=20 and text round trip") {
  for (auto fam : {CapFamilies::kAlternating, CapFamilies::kNeumann}) {
  const auto table = degree_table({kCap25, 20, fam});
  CHECK(table->entries().size() == 231);
  for (int m = 0; m <= 20; ++m) {
    for (int k = m; k <= 20; ++k) {
      CHECK(table->at(k, m).residual < 1e-8);
      if (k > m) CHECK(table->at(k, m).degree > table->at(k - 1, m).degree);
    }
  }
  CHECK(table.get() == degree_table({kCap25, 20, fam}).get());

  std::stringstream text;
  table->write_text(text);
  const auto back = DegreeTable::read_text(text);
  CHECK(back.spec().max_degree == 20);
  CHECK(back.spec().families == fam);
  CHECK(back.at(17, -4).degree == table->at(17, 4).degree);
  CHECK(back.at(6, 1).family == table->at(6, 1).family);
  }
  CHECK(degree_table({kCap25, 20, CapFamilies::kAlternating}).get() !=
        degree_table({kCap25, 20, CapFamilies::kNeumann}).get());
}

TEST_CASE("cap basis shape, ordering and constant mode") {
  const auto grid = fibonacci_cap(kCap25, 2000);
  const auto b20 = cap_basis({kCap25, 20}, grid);
  CHECK(b20.values.cols() == 441);
  const auto b4 = cap_basis({kCap25, 4}, grid);
  CHECK(b4.values.cols() == 25);
  const auto c0 = b4.values.col(0);
  CHECK((c0.array() > 0.0).all());
  CHECK(c0.maxCoeff() - c0.minCoeff() < 1e-12);
  for (Eigen::Index j = 0; j < b4.values.cols(); ++j) {
    CHECK(b4.values.col(j).norm() == doctest::Approx(1.0));
  }
  const DirectionSet outside({Direction::from_polar(deg2rad(26.0), 0.0)});
  CHECK_THROWS_AS(cap_basis({kCap25, 4}, outside), DomainError);
}

TEST_CASE("cap fit recovers exact representations") {
  const auto grid = fibonacci_cap(kCap25, 3000);
  for (auto fam : {CapFamilies::kAlternating, CapFamilies::kNeumann}) {
  const auto basis = cap_basis({kCap25, 10, fam}, grid);
  for (Eigen::Index j : {0, 7, 60, 120}) {
    const auto q = fit_cap(basis, basis.values.col(j));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(basis.values.cols());
    e[j] = 1.0;
    CHECK((q.values - e).cwiseAbs().maxCoeff() < 1e-8);
  }
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::VectorXd q0(basis.values.cols());
  for (auto& v : q0) v = nd(rng);
  const auto q = fit_cap(basis, basis.values * q0);
  CHECK((q.values - q0).norm() / q0.norm() < 1e-8);
  }
}

TEST_CASE("cap fit residual is non-increasing in K") {
  const auto grid = fibonacci_cap(kCap25, 1500);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  Eigen::VectorXd f(static_cast<Eigen::Index>(grid.size()));
  for (auto& v : f) v = nd(rng);
  double prev = f.norm();
  for (int k = 0; k <= 20; ++k) {
    const auto basis = cap_basis({kCap25, k}, grid);
    const auto q = fit_cap(basis, f);
    const double res = (f - reconstruct(basis, q)).norm();
    CHECK(res <= prev + 1e-12);
    prev = res;
  }
}

TEST_CASE("alternating families are ill-conditioned at high K") {
  const auto grid = fibonacci_cap(kCap25, 1500);
  CHECK(LeastSquaresSolver(cap_basis({kCap25, 8}, grid).values).condition() < 1e8);
  CHECK(LeastSquaresSolver(cap_basis({kCap25, 12}, grid).values).condition() < 20.0);
  CHECK_THROWS_AS(
      LeastSquaresSolver(cap_basis({kCap25, 12, CapFamilies::kAlternating}, grid).values),
      RankError);
}

TEST_CASE("cap modes of one family are orthogonal over the cap") {
  const int kmax = 20;
  std::vector<double> x;
  std::vector<double> w;
  gauss_legendre(120, x, w);
  const double c = std::cos(kCap25);
  const int nphi = 48;
  std::vector<Direction> dirs;
  std::vector<double> weights;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ct = 0.5 * (1.0 - c) * x[i] + 0.5 * (1.0 + c);
    for (int j = 0; j < nphi; ++j) {
      dirs.push_back(Direction::from_polar(std::acos(ct), 2.0 * kPi * j / nphi));
      weights.push_back(w[i]);
    }
  }
  for (auto fam : {CapFamilies::kAlternating, CapFamilies::kNeumann}) {
  const int step = fam == CapFamilies::kAlternating ? 2 : 1;
  const auto basis = cap_basis({kCap25, kmax, fam}, DirectionSet(dirs));
  const Eigen::Map<const Eigen::VectorXd> wv(weights.data(), static_cast<Eigen::Index>(weights.size()));
  double worst = 0.0;
  for (int m = -kmax; m <= kmax; ++m) {
    for (int k1 = std::abs(m); k1 <= kmax; ++k1) {
      for (int k2 = k1 + step; k2 <= kmax; k2 += step) {
        const auto a = basis.values.col(k1 * k1 + k1 + m);
        const auto b = basis.values.col(k2 * k2 + k2 + m);
        const double ab = (a.array() * b.array() * wv.array()).sum();
        const double aa = (a.array().square() * wv.array()).sum();
        const double bb = (b.array().square() * wv.array()).sum();
        worst = std::max(worst, std::abs(ab) / std::sqrt(aa * bb));
      }
    }
  }
  CHECK(worst < 1e-4);
  }
}

TEST_CASE("shape descriptors") {
  SchCoefficients zero{{kCap25, 5}, Eigen::VectorXd::Zero(36)};
  CHECK(shape_descriptors(zero).cwiseAbs().maxCoeff() == 0.0);
  SchCoefficients unit{{kCap25, 5}, Eigen::VectorXd::Zero(36)};
  unit.values[3 * 3 + 3 - 2] = 1.0;
  const auto d = shape_descriptors(unit);
  REQUIRE(d.size() == 6);
  for (int k = 0; k <= 5; ++k) CHECK(d[k] == doctest::Approx(k == 3 ? 1.0 : 0.0));
}

TEST_CASE("shape descriptors are invariant to rotation about the cap axis") {
  const int kmax = 8;
  const auto grid = ring_cap(kCap25, 30, 40);
  const auto basis = cap_basis({kCap25, kmax}, grid);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  Eigen::VectorXd q0(basis.values.cols());
  for (auto& v : q0) v = nd(rng);
  const Eigen::VectorXd f = basis.values * q0;
  const auto d0 = shape_descriptors(fit_cap(basis, f));

  // Build the column scaling of the original grid, then evaluate the same
  // function on azimuth-shifted points.
  for (double alpha : {0.3, 1.1, 2.9}) {
    std::vector<Direction> shifted;
    for (const auto& d : grid) shifted.push_back(Direction::from_polar(d.polar(), d.azimuth - alpha));
    const auto rb = cap_basis({kCap25, kmax}, DirectionSet(shifted));
    // rotated columns have the same per-column norms on a ring grid, so the
    // raw synthesis f(theta, phi - alpha) is rb * q0
    const Eigen::VectorXd fr = rb.values * q0;
    const auto d1 = shape_descriptors(fit_cap(basis, fr));
    CHECK((d1 - d0).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("smooth bump on the 9062-point cap refines from K=10 to K=20") {
  // same spiral layout as the geometry module's cap grid
  const auto grid = fibonacci_cap(kCap25, 9062);
  Eigen::VectorXd f(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i].polar();
    f[static_cast<Eigen::Index>(i)] = std::exp(-t * t / 0.02);
  }
  double res[2];
  int idx = 0;
  for (int k : {10, 20}) {
    const auto basis = cap_basis({kCap25, k}, grid);
    res[idx++] = (f - reconstruct(basis, fit_cap(basis, f))).norm();
  }
  CHECK(res[1] < res[0]);
}
