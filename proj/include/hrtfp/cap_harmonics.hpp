#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <memory>
#include <utility>
#include <vector>

#include "hrtfp/directions.hpp"
#include "hrtfp/least_squares.hpp"

namespace hrtfp {

/// Which rim conditions generate the degrees of a cap basis.
enum class CapFamilies {
  /// dP/dtheta = 0 for every mode: one complete orthogonal Sturm-Liouville
  /// family, l(m)_k is the (k-m+1)-th derivative root.
  kNeumann,
  /// Alternating rim conditions: derivative roots for (k-m) even, value
  /// roots for (k-m) odd. The union is redundant and its condition number
  /// grows roughly 30x per two degrees (about 2e14 at K=20 on a 25 deg cap).
  kAlternating,
};

struct CapSpec {
  double half_angle = 0.0;  // radians, (0, pi/2]
  int max_degree = 0;       // K
  CapFamilies families = CapFamilies::kNeumann;

  /// Throws DomainError when the angle or K is out of range.
  void validate() const;
  int coefficient_count() const { return (max_degree + 1) * (max_degree + 1); }
};

/// Ferrers function P_l^m(x) of real degree l >= m, Condon-Shortley phase
/// included so that integer degrees agree with assoc_legendre.
double legendre_real_degree(double l, int m, double x);

/// Boundary condition pinning the degree of a cap mode at the rim.
enum class BoundaryFamily {
  kDerivative,  // dP/dtheta = 0, used for (k - m) even
  kValue,       // P = 0, used for (k - m) odd
};

/// Scale-free boundary functional at the rim; its roots in l are the cap
/// degrees. Normalized by the amplitude of (P_l, P_{l-1}) so that values stay
/// of order one (|value| <= sqrt 2) for every m.
double boundary_functional(BoundaryFamily family, double l, int m, double half_angle);

struct DegreeEntry {
  int k = 0;
  int m = 0;
  double degree = 0.0;
  BoundaryFamily family = BoundaryFamily::kDerivative;
  double residual = 0.0;
};

/// Degrees l(m)_k for k = m..K at one order m >= 0, strictly increasing in k.
std::vector<DegreeEntry> solve_cap_degrees(double half_angle, int m, int max_degree,
                                           CapFamilies families = CapFamilies::kNeumann);

/// All degrees for a cap, |m| <= k <= K. Negative m share the degree of |m|.
class DegreeTable {
 public:
  DegreeTable() = default;
  explicit DegreeTable(CapSpec spec, std::vector<DegreeEntry> entries);

  const CapSpec& spec() const noexcept { return spec_; }
  const std::vector<DegreeEntry>& entries() const noexcept { return entries_; }
  /// Entry for (k, |m|).
  const DegreeEntry& at(int k, int m) const;

  /// Plain-text table: header line, then "k m degree family residual".
  void write_text(std::ostream& out) const;
  static DegreeTable read_text(std::istream& in);

 private:
  CapSpec spec_;
  std::vector<DegreeEntry> entries_;
  std::vector<int> index_;  // (k, m >= 0) -> position in entries_
};

/// Solves, or returns the cached table for (half angle rounded to 1e-12, K).
/// Thread-safe; the returned table is immutable.
std::shared_ptr<const DegreeTable> degree_table(const CapSpec& spec);

struct CapBasisMatrix {
  CapSpec spec;
  Eigen::MatrixXd values;
};

struct SchCoefficients {
  CapSpec spec;
  Eigen::VectorXd values;
};

/// Column (k, m) sits at k^2 + k + m. Cap-local directions: polar angle
/// measured from the cap axis. Each column is scaled to unit l2 norm over
/// the sample set.
CapBasisMatrix cap_basis(const CapSpec& spec, const DirectionSet& cap_dirs);

SchCoefficients fit_cap(const CapBasisMatrix& basis, const Eigen::VectorXd& samples,
                        FitOptions options = {});

/// Factorizes a cap basis once for repeated fits on the same sample grid.
class CapFitter {
 public:
  explicit CapFitter(CapBasisMatrix basis, FitOptions options = {});

  const CapBasisMatrix& basis() const noexcept { return basis_; }
  SchCoefficients fit(const Eigen::VectorXd& samples) const;
  /// One coefficient column per sample column.
  Eigen::MatrixXd fit_columns(const Eigen::MatrixXd& samples) const;

 private:
  CapBasisMatrix basis_;
  LeastSquaresSolver solver_;
};

Eigen::VectorXd reconstruct(const CapBasisMatrix& basis, const SchCoefficients& coeffs);

/// Per-degree amplitude sqrt(sum_m q(k,m)^2), k = 0..K.
Eigen::VectorXd shape_descriptors(const SchCoefficients& coeffs);

}  // namespace hrtfp
