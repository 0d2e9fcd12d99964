#include "hrtfp/spherical_harmonics.hpp"

#include "hrtfp/binary_io.hpp"
#include "hrtfp/errors.hpp"

#include <cmath>
#include <sstream>

namespace hrtfp {

namespace {

// P_l^m for 0 <= m <= l by upward recurrence in l from P_m^m.
double legendre_nonneg(int l, int m, double x) {
  const double somx2 = std::sqrt((1.0 - x) * (1.0 + x));
  double pmm = 1.0;
  double fact = 1.0;
  for (int i = 1; i <= m; ++i) {
    pmm *= -fact * somx2;
    fact += 2.0;
  }
  if (l == m) return pmm;
  double pmmp1 = x * (2.0 * m + 1.0) * pmm;
  if (l == m + 1) return pmmp1;
  double pll = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pll = (x * (2.0 * ll - 1.0) * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
    pmm = pmmp1;
    pmmp1 = pll;
  }
  return pll;
}

double sh_norm(int l, int m) {
  return std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) *
                   std::exp(std::lgamma(l - m + 1.0) - std::lgamma(l + m + 1.0)));
}

}  // namespace

double assoc_legendre(int l, int m, double x) {
  if (l < 0 || std::abs(m) > l) {
    std::ostringstream msg;
    msg << "assoc_legendre requires 0 <= |m| <= l, got l=" << l << " m=" << m;
    throw DomainError(msg.str());
  }
  if (!(std::abs(x) <= 1.0)) throw DomainError("assoc_legendre requires |x| <= 1");
  if (m >= 0) return legendre_nonneg(l, m, x);
  const int am = -m;
  const double ratio = std::exp(std::lgamma(l - am + 1.0) - std::lgamma(l + am + 1.0));
  return ((am % 2) ? -1.0 : 1.0) * ratio * legendre_nonneg(l, am, x);
}

ShBasisMatrix real_sh_basis(int order, const DirectionSet& dirs) {
  if (order < 0) throw DomainError("SH order must be non-negative");
  ShBasisMatrix basis;
  basis.order = order;
  basis.values.resize(static_cast<Eigen::Index>(dirs.size()), sh_count(order));
  const double sqrt2 = std::sqrt(2.0);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const double x = std::cos(dirs[i].polar());
    const double phi = dirs[i].azimuth;
    const auto row = static_cast<Eigen::Index>(i);
    for (int l = 0; l <= order; ++l) {
      basis.values(row, sh_index(l, 0)) = sh_norm(l, 0) * legendre_nonneg(l, 0, x);
      for (int m = 1; m <= l; ++m) {
        const double cs = (m % 2) ? -1.0 : 1.0;
        const double p = sqrt2 * sh_norm(l, m) * cs * legendre_nonneg(l, m, x);
        basis.values(row, sh_index(l, m)) = p * std::cos(m * phi);
        basis.values(row, sh_index(l, -m)) = p * std::sin(m * phi);
      }
    }
  }
  return basis;
}

ShCoefficients fit_sh(const ShBasisMatrix& basis, const Eigen::VectorXd& samples,
                      FitOptions options) {
  return {basis.order, least_squares_fit(basis.values, samples, options)};
}

Eigen::VectorXd reconstruct(const ShBasisMatrix& basis, const ShCoefficients& coeffs) {
  if (coeffs.values.size() != basis.values.cols()) {
    std::ostringstream msg;
    msg << "coefficient length " << coeffs.values.size() << " does not match basis columns "
        << basis.values.cols();
    throw DimensionError(msg.str());
  }
  return basis.values * coeffs.values;
}

void write_coefficients(std::ostream& out, const ShCoefficients& coeffs) {
  if (coeffs.values.size() != sh_count(coeffs.order)) {
    throw DimensionError("coefficient vector length does not match its order");
  }
  io::write_u32(out, static_cast<std::uint32_t>(coeffs.order));
  for (Eigen::Index i = 0; i < coeffs.values.size(); ++i) io::write_f64(out, coeffs.values[i]);
  if (!out) throw IoError("failed to write SH coefficients");
}

ShCoefficients read_coefficients(std::istream& in) {
  ShCoefficients c;
  const std::uint32_t order = io::read_u32(in);
  if (order > 1000) throw ParseError("implausible SH order in coefficient file");
  c.order = static_cast<int>(order);
  c.values.resize(sh_count(c.order));
  for (Eigen::Index i = 0; i < c.values.size(); ++i) c.values[i] = io::read_f64(in);
  return c;
}

}  // namespace hrtfp
