#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <numbers>
#include <vector>

namespace hrtfp {

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// A direction on the unit sphere. Azimuth is measured counter-clockwise
/// from +x (front) towards +y (left); elevation from the horizontal plane.
struct Direction {
  double azimuth = 0.0;    // [0, 2pi)
  double elevation = 0.0;  // [-pi/2, pi/2]

  Direction() = default;
  /// Wraps azimuth into [0, 2pi); throws DomainError on non-finite input or
  /// elevation outside [-pi/2, pi/2].
  Direction(double azimuth_rad, double elevation_rad);

  static Direction from_degrees(double az_deg, double el_deg) {
    return Direction(deg2rad(az_deg), deg2rad(el_deg));
  }
  static Direction from_vector(const Eigen::Vector3d& v);
  /// Direction at polar angle theta (from +z) and azimuth phi.
  static Direction from_polar(double theta, double phi);

  /// Polar angle measured from +z.
  double polar() const noexcept { return kPi / 2.0 - elevation; }
  Eigen::Vector3d unit_vector() const;

  bool operator==(const Direction&) const = default;
};

/// Ordered sampling of the sphere; order is preserved by every fit.
class DirectionSet {
 public:
  DirectionSet() = default;
  explicit DirectionSet(std::vector<Direction> dirs);

  std::size_t size() const noexcept { return dirs_.size(); }
  bool empty() const noexcept { return dirs_.empty(); }
  const Direction& operator[](std::size_t i) const { return dirs_[i]; }
  auto begin() const noexcept { return dirs_.begin(); }
  auto end() const noexcept { return dirs_.end(); }
  const std::vector<Direction>& directions() const noexcept { return dirs_; }

 private:
  std::vector<Direction> dirs_;
};

/// Directions plus quadrature weights summing to 4pi.
struct QuadratureGrid {
  DirectionSet directions;
  Eigen::VectorXd weights;
};

/// Elevation rings from +90 deg down to -90 deg with one point at each pole
/// and even, cos(elevation)-proportional ring populations. Ordering starts at
/// the top and sweeps each ring by increasing azimuth from 0.
DirectionSet ring_grid(std::size_t total = 440, double ring_step_deg = 10.0);

/// Spherical Fibonacci layout of n near-equal-area points.
DirectionSet fibonacci_sphere(std::size_t n);

/// Gauss-Legendre in cos(theta) times equispaced azimuth. Integrates
/// polynomials on the sphere exactly up to degree min(2*n_theta-1, n_phi-1).
QuadratureGrid gauss_product_grid(std::size_t n_theta, std::size_t n_phi);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(std::size_t n, std::vector<double>& nodes,
                    std::vector<double>& weights);

/// Great-circle angle between two directions.
double angular_distance(const Direction& a, const Direction& b);

}  // namespace hrtfp
