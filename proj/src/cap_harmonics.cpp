#include "hrtfp/cap_harmonics.hpp"

#include "hrtfp/errors.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

namespace hrtfp {

namespace {

constexpr int kSeriesCap = 200000;

// Gauss hypergeometric series 2F1(a, b; c; z) for 0 <= z < 1. Only called
// with |a| < 2, where the terms change sign at most once and the sum does
// not suffer cancellation.
long double hyp2f1(long double a, long double b, long double c, long double z) {
  long double term = 1.0L;
  long double sum = 1.0L;
  int quiet = 0;
  for (int n = 0; n < kSeriesCap; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0L)) * z;
    sum += term;
    if (term == 0.0L) return sum;
    if (std::fabs(term) <= 1e-18L * std::fabs(sum)) {
      if (++quiet >= 2) return sum;
    } else {
      quiet = 0;
    }
  }
  std::ostringstream msg;
  msg << "hypergeometric series did not converge within " << kSeriesCap
      << " terms (a=" << static_cast<double>(a) << ", b=" << static_cast<double>(b)
      << ", z=" << static_cast<double>(z) << ")";
  throw ConvergenceError(msg.str());
}

// G_mu(x) = Gamma(mu+m+1)/Gamma(mu-m+1) * 2F1(m-mu, m+mu+1; m+1; (1-x)/2).
// P_mu^m(x) = (-1)^m (1-x^2)^(m/2) / (2^m m!) * G_mu(x), and G obeys the same
// three-term recurrence in mu as P.
long double scaled_series(long double mu, int m, long double z) {
  long double ratio = 1.0L;
  for (int j = -m + 1; j <= m; ++j) ratio *= mu + j;
  return ratio * hyp2f1(m - mu, m + mu + 1.0L, m + 1.0L, z);
}

struct ScaledPair {
  double current;   // G_nu
  double previous;  // G_{nu-1}
};

// Series for the two lowest degrees congruent to nu, then upward recurrence
// in degree, which is stable for the Ferrers P function on (-1, 1].
ScaledPair scaled_pair(double nu, int m, double x) {
  const long double z = (1.0L - x) / 2.0L;
  const double span = nu - m;
  const int steps = span <= 0.0 ? 0 : static_cast<int>(std::floor(span));
  const long double base = static_cast<long double>(nu) - steps;
  long double prev = scaled_series(base - 1.0L, m, z);
  long double cur = scaled_series(base, m, z);
  for (int s = 0; s < steps; ++s) {
    const long double mu = base + s;
    const long double next = ((2.0L * mu + 1.0L) * x * cur - (mu + m) * prev) / (mu - m + 1.0L);
    prev = cur;
    cur = next;
  }
  return {static_cast<double>(cur), static_cast<double>(prev)};
}

void check_degree_args(double l, int m) {
  if (m < 0) throw DomainError("real-degree Legendre needs m >= 0");
  if (!std::isfinite(l) || l < m) {
    std::ostringstream msg;
    msg << "real-degree Legendre needs finite l >= m, got l=" << l << " m=" << m;
    throw DomainError(msg.str());
  }
}

std::vector<double> scan_roots(BoundaryFamily family, int m, double half_angle,
                               int max_degree, int wanted) {
  std::vector<double> roots;
  if (wanted == 0) return roots;

  auto f = [&](double l) { return boundary_functional(family, l, m, half_angle); };
  const double lo = m;
  const double hi = m + 4.0 * std::max(max_degree, 1) * kPi / half_angle;
  const double step = half_angle / (8.0 * kPi);
  constexpr double kOnGrid = 1e-13;

  double a = lo;
  if (m == 0 && family == BoundaryFamily::kDerivative) {
    // The constant mode: dP_0/dtheta vanishes identically.
    roots.push_back(0.0);
    a = step;
  }
  double fa = f(a);
  if (std::abs(fa) < kOnGrid) {
    roots.push_back(a);
    a += step;
    fa = f(a);
  }
  while (static_cast<int>(roots.size()) < wanted) {
    const double b = a + step;
    if (b > hi) {
      std::ostringstream msg;
      msg << "cap degree root not found for m=" << m << " in scanned interval [" << lo
          << ", " << hi << "] (found " << roots.size() << " of " << wanted << ")";
      throw ConvergenceError(msg.str());
    }
    const double fb = f(b);
    if (std::abs(fb) < kOnGrid) {
      // Root sits on the grid; restart the sign reference past it.
      roots.push_back(b);
      a = b + step;
      fa = f(a);
      continue;
    }
    if ((fa < 0.0) != (fb < 0.0)) {
      boost::math::tools::eps_tolerance<double> tol(50);
      std::uintmax_t iters = 200;
      const auto bracket = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iters);
      const double r = std::abs(f(bracket.first)) <= std::abs(f(bracket.second))
                           ? bracket.first
                           : bracket.second;
      roots.push_back(r);
    }
    a = b;
    fa = fb;
  }
  return roots;
}

}  // namespace

void CapSpec::validate() const {
  if (!(half_angle > 0.0 && half_angle <= kPi / 2.0 + 1e-15)) {
    throw DomainError("cap half angle must lie in (0, pi/2]");
  }
  if (max_degree < 0) throw DomainError("cap max degree index must be non-negative");
}

double legendre_real_degree(double l, int m, double x) {
  check_degree_args(l, m);
  if (!(x > -1.0 && x <= 1.0)) {
    throw DomainError("real-degree Legendre requires x in (-1, 1]");
  }
  const ScaledPair g = scaled_pair(l, m, x);
  double scale = (m % 2) ? -1.0 : 1.0;
  const double s = std::sqrt((1.0 - x) * (1.0 + x));
  for (int i = 1; i <= m; ++i) scale *= s / (2.0 * i);
  return scale * g.current;
}

double boundary_functional(BoundaryFamily family, double l, int m, double half_angle) {
  check_degree_args(l, m);
  const double x = std::cos(half_angle);
  const ScaledPair g = scaled_pair(l, m, x);
  const double amp = std::hypot(g.current, g.previous);
  if (family == BoundaryFamily::kValue) return g.current / amp;
  if (l + m == 0.0) return 0.0;
  // (1 - x^2) dP/dx = (l + m) P_{l-1} - l x P_l
  return ((l + m) * g.previous - l * x * g.current) / ((l + m) * amp);
}

std::vector<DegreeEntry> solve_cap_degrees(double half_angle, int m, int max_degree,
                                           CapFamilies families) {
  CapSpec{half_angle, max_degree, families}.validate();
  if (m < 0 || m > max_degree) throw DomainError("solve_cap_degrees needs 0 <= m <= K");
  const int span = max_degree - m;
  const bool alternating = families == CapFamilies::kAlternating;
  const auto deriv = scan_roots(BoundaryFamily::kDerivative, m, half_angle, max_degree,
                                alternating ? span / 2 + 1 : span + 1);
  const auto value = alternating ? scan_roots(BoundaryFamily::kValue, m, half_angle,
                                              max_degree, (span + 1) / 2)
                                 : std::vector<double>{};
  std::vector<DegreeEntry> out;
  for (int k = m; k <= max_degree; ++k) {
    DegreeEntry e;
    e.k = k;
    e.m = m;
    const int j = alternating ? (k - m) / 2 : k - m;
    if (!alternating || (k - m) % 2 == 0) {
      e.family = BoundaryFamily::kDerivative;
      e.degree = deriv[j];
    } else {
      e.family = BoundaryFamily::kValue;
      e.degree = value[j];
    }
    e.residual = std::abs(boundary_functional(e.family, e.degree, m, half_angle));
    if (!(e.residual < 1e-8)) {
      std::ostringstream msg;
      msg << "cap degree (k=" << k << ", m=" << m << ") residual " << e.residual
          << " exceeds 1e-8";
      throw ConvergenceError(msg.str());
    }
    out.push_back(e);
  }
  return out;
}

DegreeTable::DegreeTable(CapSpec spec, std::vector<DegreeEntry> entries)
    : spec_(spec), entries_(std::move(entries)) {
  const int kk = spec_.max_degree + 1;
  index_.assign(static_cast<std::size_t>(kk * kk), -1);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.k < 0 || e.k > spec_.max_degree || e.m < 0 || e.m > e.k) {
      throw DomainError("degree table entry out of range");
    }
    index_[static_cast<std::size_t>(e.k * kk + e.m)] = static_cast<int>(i);
  }
  for (int k = 0; k < kk; ++k) {
    for (int m = 0; m <= k; ++m) {
      if (index_[static_cast<std::size_t>(k * kk + m)] < 0) {
        throw DomainError("degree table is missing entries");
      }
    }
  }
}

const DegreeEntry& DegreeTable::at(int k, int m) const {
  const int am = std::abs(m);
  if (k < 0 || k > spec_.max_degree || am > k) throw DomainError("degree table index out of range");
  return entries_[static_cast<std::size_t>(index_[static_cast<std::size_t>(k * (spec_.max_degree + 1) + am)])];
}

void DegreeTable::write_text(std::ostream& out) const {
  out << "# cap_half_angle_rad " << std::setprecision(17) << spec_.half_angle
      << " max_degree " << spec_.max_degree << " families "
      << (spec_.families == CapFamilies::kNeumann ? "neumann" : "alternating") << "\n";
  out << "# k m degree family residual\n";
  for (const auto& e : entries_) {
    out << e.k << ' ' << e.m << ' ' << std::setprecision(17) << e.degree << ' '
        << (e.family == BoundaryFamily::kDerivative ? "derivative" : "value") << ' '
        << std::setprecision(3) << e.residual << "\n";
  }
  if (!out) throw IoError("failed to write degree table");
}

DegreeTable DegreeTable::read_text(std::istream& in) {
  std::string line;
  CapSpec spec;
  bool have_header = false;
  std::vector<DegreeEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key1, key2, key3, fam;
      ls >> hash >> key1;
      if (key1 == "cap_half_angle_rad") {
        ls >> spec.half_angle >> key2 >> spec.max_degree >> key3 >> fam;
        if (!ls || key2 != "max_degree" || key3 != "families") {
          throw ParseError("bad degree table header");
        }
        if (fam == "neumann") {
          spec.families = CapFamilies::kNeumann;
        } else if (fam == "alternating") {
          spec.families = CapFamilies::kAlternating;
        } else {
          throw ParseError("unknown cap family set: " + fam);
        }
        have_header = true;
      }
      continue;
    }
    DegreeEntry e;
    std::string family;
    if (!(ls >> e.k >> e.m >> e.degree >> family >> e.residual)) {
      throw ParseError("bad degree table row: " + line);
    }
    if (family == "derivative") {
      e.family = BoundaryFamily::kDerivative;
    } else if (family == "value") {
      e.family = BoundaryFamily::kValue;
    } else {
      throw ParseError("unknown boundary family: " + family);
    }
    entries.push_back(e);
  }
  if (!have_header) throw ParseError("degree table header missing");
  spec.validate();
  return DegreeTable(spec, std::move(entries));
}

std::shared_ptr<const DegreeTable> degree_table(const CapSpec& spec) {
  spec.validate();
  static std::mutex mutex;
  using Key = std::tuple<long long, int, CapFamilies>;
  static std::map<Key, std::shared_ptr<const DegreeTable>> cache;
  const Key key{std::llround(spec.half_angle * 1e12), spec.max_degree, spec.families};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  std::vector<DegreeEntry> entries;
  for (int m = 0; m <= spec.max_degree; ++m) {
    auto row = solve_cap_degrees(spec.half_angle, m, spec.max_degree, spec.families);
    entries.insert(entries.end(), row.begin(), row.end());
  }
  auto table = std::make_shared<const DegreeTable>(spec, std::move(entries));
  std::lock_guard lock(mutex);
  return cache.try_emplace(key, std::move(table)).first->second;
}

CapBasisMatrix cap_basis(const CapSpec& spec, const DirectionSet& cap_dirs) {
  const auto table = degree_table(spec);
  const auto n = static_cast<Eigen::Index>(cap_dirs.size());
  std::vector<double> x(cap_dirs.size());
  std::vector<double> s(cap_dirs.size());
  for (std::size_t i = 0; i < cap_dirs.size(); ++i) {
    const double theta = cap_dirs[i].polar();
    if (theta > spec.half_angle + 1e-12) {
      std::ostringstream msg;
      msg << "direction at polar angle " << theta << " rad lies outside the cap of half angle "
          << spec.half_angle;
      throw DomainError(msg.str());
    }
    x[i] = std::cos(theta);
    s[i] = std::sin(theta);
  }

  CapBasisMatrix basis;
  basis.spec = spec;
  basis.values.resize(n, spec.coefficient_count());
  Eigen::VectorXd radial(n);
  for (int k = 0; k <= spec.max_degree; ++k) {
    for (int m = 0; m <= k; ++m) {
      const double nu = table->at(k, m).degree;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        radial[i] = ((m % 2) ? -1.0 : 1.0) * std::pow(s[ui], m) * scaled_pair(nu, m, x[ui]).current;
      }
      for (int sign : {1, -1}) {
        if (m == 0 && sign < 0) continue;
        auto col = basis.values.col(k * k + k + sign * m);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double phi = cap_dirs[static_cast<std::size_t>(i)].azimuth;
          col[i] = radial[i] * (sign > 0 ? std::cos(m * phi) : std::sin(m * phi));
        }
        const double norm = col.norm();
        if (!(norm > 0.0)) {
          std::ostringstream msg;
          msg << "cap basis column (k=" << k << ", m=" << sign * m
              << ") vanishes on the sample set";
          throw DomainError(msg.str());
        }
        col /= norm;
      }
    }
  }
  return basis;
}

SchCoefficients fit_cap(const CapBasisMatrix& basis, const Eigen::VectorXd& samples,
                        FitOptions options) {
  return {basis.spec, least_squares_fit(basis.values, samples, options)};
}

CapFitter::CapFitter(CapBasisMatrix basis, FitOptions options)
    : basis_(std::move(basis)), solver_(basis_.values, options) {}

SchCoefficients CapFitter::fit(const Eigen::VectorXd& samples) const {
  return {basis_.spec, solver_.solve(samples)};
}

Eigen::MatrixXd CapFitter::fit_columns(const Eigen::MatrixXd& samples) const {
  return solver_.solve(samples);
}

Eigen::VectorXd reconstruct(const CapBasisMatrix& basis, const SchCoefficients& coeffs) {
  if (coeffs.values.size() != basis.values.cols()) {
    throw DimensionError("SCH coefficient length does not match basis columns");
  }
  return basis.values * coeffs.values;
}

Eigen::VectorXd shape_descriptors(const SchCoefficients& coeffs) {
  const int kmax = coeffs.spec.max_degree;
  if (coeffs.values.size() != coeffs.spec.coefficient_count()) {
    throw DimensionError("SCH coefficient length does not match its cap spec");
  }
  Eigen::VectorXd d(kmax + 1);
  for (int k = 0; k <= kmax; ++k) {
    d[k] = coeffs.values.segment(k * k, 2 * k + 1).norm();
  }
  return d;
}

}  // namespace hrtfp
