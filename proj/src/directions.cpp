#include "hrtfp/directions.hpp"

#include "hrtfp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hrtfp {

Direction::Direction(double azimuth_rad, double elevation_rad) {
  if (!std::isfinite(azimuth_rad) || !std::isfinite(elevation_rad)) {
    throw DomainError("direction angles must be finite");
  }
  if (elevation_rad < -kPi / 2.0 - 1e-12 || elevation_rad > kPi / 2.0 + 1e-12) {
    throw DomainError("elevation outside [-pi/2, pi/2]");
  }
  azimuth = std::fmod(azimuth_rad, 2.0 * kPi);
  if (azimuth < 0.0) azimuth += 2.0 * kPi;
  if (azimuth >= 2.0 * kPi) azimuth = 0.0;
  elevation = std::clamp(elevation_rad, -kPi / 2.0, kPi / 2.0);
}

Direction Direction::from_vector(const Eigen::Vector3d& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DomainError("cannot take the direction of a zero or non-finite vector");
  }
  const double z = std::clamp(v.z() / n, -1.0, 1.0);
  return Direction(std::atan2(v.y(), v.x()), std::asin(z));
}

Direction Direction::from_polar(double theta, double phi) {
  return Direction(phi, kPi / 2.0 - theta);
}

Eigen::Vector3d Direction::unit_vector() const {
  const double ce = std::cos(elevation);
  return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

DirectionSet::DirectionSet(std::vector<Direction> dirs) : dirs_(std::move(dirs)) {}

DirectionSet ring_grid(std::size_t total, double ring_step_deg) {
  if (total < 4) throw DomainError("ring grid needs at least 4 points");
  const int interior = static_cast<int>(std::lround(180.0 / ring_step_deg)) - 1;
  if (interior < 1) throw DomainError("ring step too coarse");
  const std::size_t pairs = (total - 2) / 2;
  if ((total - 2) % 2 != 0) throw DomainError("ring grid total must be even");

  std::vector<double> elev(interior);
  std::vector<double> weight(interior);
  for (int i = 0; i < interior; ++i) {
    elev[i] = 90.0 - ring_step_deg * (i + 1);
    weight[i] = std::cos(deg2rad(elev[i]));
  }
  const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);

  // Largest-remainder apportionment of point pairs keeps every ring even.
  std::vector<std::size_t> count(interior);
  std::vector<double> frac(interior);
  std::size_t assigned = 0;
  for (int i = 0; i < interior; ++i) {
    const double ideal = static_cast<double>(pairs) * weight[i] / wsum;
    count[i] = static_cast<std::size_t>(std::floor(ideal));
    frac[i] = ideal - std::floor(ideal);
    assigned += count[i];
  }
  std::vector<int> order(interior);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < pairs; ++r, ++assigned) {
    ++count[order[r % interior]];
  }

  std::vector<Direction> dirs;
  dirs.reserve(total);
  dirs.push_back(Direction::from_degrees(0.0, 90.0));
  for (int i = 0; i < interior; ++i) {
    const std::size_t n = 2 * count[i];
    for (std::size_t j = 0; j < n; ++j) {
      dirs.push_back(Direction::from_degrees(360.0 * j / n, elev[i]));
    }
  }
  dirs.push_back(Direction::from_degrees(0.0, -90.0));
  return DirectionSet(std::move(dirs));
}

DirectionSet fibonacci_sphere(std::size_t n) {
  std::vector<Direction> dirs;
  dirs.reserve(n);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / static_cast<double>(n);
    dirs.push_back(Direction(golden * i, std::asin(z)));
  }
  return DirectionSet(std::move(dirs));
}

void gauss_legendre(std::size_t n, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = x;
    nodes[n - 1 - i] = -x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

QuadratureGrid gauss_product_grid(std::size_t n_theta, std::size_t n_phi) {
  std::vector<double> x;
  std::vector<double> w;
  gauss_legendre(n_theta, x, w);
  std::vector<Direction> dirs;
  QuadratureGrid grid;
  grid.weights.resize(static_cast<Eigen::Index>(n_theta * n_phi));
  Eigen::Index idx = 0;
  for (std::size_t i = 0; i < n_theta; ++i) {
    for (std::size_t j = 0; j < n_phi; ++j) {
      dirs.push_back(Direction::from_polar(std::acos(x[i]), 2.0 * kPi * j / n_phi));
      grid.weights[idx++] = w[i] * 2.0 * kPi / n_phi;
    }
  }
  grid.directions = DirectionSet(std::move(dirs));
  return grid;
}

double angular_distance(const Direction& a, const Direction& b) {
  const Eigen::Vector3d u = a.unit_vector();
  const Eigen::Vector3d v = b.unit_vector();
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace hrtfp
