#pragma once

#include <Eigen/Core>

#include <iosfwd>

#include "hrtfp/directions.hpp"
#include "hrtfp/least_squares.hpp"

namespace hrtfp {

/// Number of real SH coefficients up to and including order L.
constexpr int sh_count(int order) { return (order + 1) * (order + 1); }

/// Column of (l, m) in the canonical order (0,0),(1,-1),(1,0),(1,1),...
constexpr int sh_index(int l, int m) { return l * l + l + m; }

/// Associated Legendre function P_l^m(x), Condon-Shortley phase included.
/// Negative m follows P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m.
double assoc_legendre(int l, int m, double x);

/// Evaluated orthonormal real SH basis, one row per direction.
struct ShBasisMatrix {
  int order = 0;
  Eigen::MatrixXd values;
};

struct ShCoefficients {
  int order = 0;
  Eigen::VectorXd values;
};

/// Real orthonormal SH: m = 0 uses N P_l^0, m > 0 uses sqrt(2) N P_l^m cos(m phi),
/// m < 0 uses sqrt(2) N P_l^|m| sin(|m| phi). The Condon-Shortley sign carried
/// by assoc_legendre is removed here so that Y_1^1 is proportional to +x.
ShBasisMatrix real_sh_basis(int order, const DirectionSet& dirs);

ShCoefficients fit_sh(const ShBasisMatrix& basis, const Eigen::VectorXd& samples,
                      FitOptions options = {});

/// f = Y c.
Eigen::VectorXd reconstruct(const ShBasisMatrix& basis, const ShCoefficients& coeffs);

/// Little-endian u32 order followed by (L+1)^2 little-endian f64 values.
void write_coefficients(std::ostream& out, const ShCoefficients& coeffs);
ShCoefficients read_coefficients(std::istream& in);

}  // namespace hrtfp
