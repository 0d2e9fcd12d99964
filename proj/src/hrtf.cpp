#include "hrtfp/hrtf.hpp"

#include "hrtfp/binary_io.hpp"
#include "hrtfp/errors.hpp"
#include "hrtfp/least_squares.hpp"
#include "hrtfp/spherical_harmonics.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <bit>
#include <cmath>
#include <complex>
#include <fstream>

namespace hrtfp {

void HrirArchive::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw DomainError("sample rate must be positive");
  const auto n = static_cast<Eigen::Index>(directions.size());
  if (n == 0) throw DimensionError("archive has no directions");
  for (const auto& m : irs) {
    if (m.rows() != n) throw DimensionError("IR rows do not match the direction count");
    if (m.cols() != irs[0].cols() || m.cols() == 0) throw DimensionError("IR lengths differ");
    if (!m.allFinite()) throw DomainError("non-finite IR sample");
  }
}

void write_archive(const std::filesystem::path& stem, const HrirArchive& archive) {
  archive.validate();
  const std::filesystem::path json_path = stem.string() + ".json";
  const std::filesystem::path blob_path = stem.string() + ".f32";
  nlohmann::json j;
  j["subject_id"] = archive.subject_id;
  j["sample_rate"] = archive.sample_rate;
  j["ir_length"] = archive.ir_length();
  j["blob"] = blob_path.filename().string();
  auto dirs = nlohmann::json::array();
  for (const auto& d : archive.directions) dirs.push_back({rad2deg(d.azimuth), rad2deg(d.elevation)});
  j["directions"] = dirs;
  {
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("failed writing " + json_path.string());
  }
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot write " + blob_path.string());
  for (Eigen::Index d = 0; d < archive.irs[0].rows(); ++d) {
    for (int ear = 0; ear < 2; ++ear) {
      for (Eigen::Index t = 0; t < archive.ir_length(); ++t) {
        io::write_f32(blob, static_cast<float>(archive.irs[ear](d, t)));
      }
    }
  }
  if (!blob) throw IoError("failed writing " + blob_path.string());
}

HrirArchive read_archive(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  HrirArchive a;
  std::filesystem::path blob_path;
  Eigen::Index len = 0;
  try {
    const auto j = nlohmann::json::parse(in);
    a.subject_id = j.at("subject_id").get<std::string>();
    a.sample_rate = j.at("sample_rate").get<double>();
    len = j.at("ir_length").get<Eigen::Index>();
    blob_path = manifest.parent_path() / j.at("blob").get<std::string>();
    std::vector<Direction> dirs;
    for (const auto& d : j.at("directions")) {
      dirs.push_back(Direction::from_degrees(d.at(0).get<double>(), d.at(1).get<double>()));
    }
    a.directions = DirectionSet(std::move(dirs));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  if (len <= 0) throw ParseError(manifest.string() + ": ir_length must be positive");
  const auto n = static_cast<Eigen::Index>(a.directions.size());
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot open " + blob_path.string());
  blob.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::streamoff>(blob.tellg());
  if (bytes != static_cast<std::streamoff>(n * 2 * len * 4)) {
    throw ParseError(blob_path.string() + ": size does not match the manifest");
  }
  blob.seekg(0);
  a.irs[0].resize(n, len);
  a.irs[1].resize(n, len);
  for (Eigen::Index d = 0; d < n; ++d) {
    for (int ear = 0; ear < 2; ++ear) {
      for (Eigen::Index t = 0; t < len; ++t) a.irs[ear](d, t) = io::read_f32(blob);
    }
  }
  a.validate();
  return a;
}

std::vector<double> log_frequencies(double f_lo, double f_hi, int n) {
  if (!(f_lo > 0.0) || !(f_hi > f_lo) || n < 2) throw DomainError("bad frequency grid");
  std::vector<double> f(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) f[i] = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / (n - 1));
  f.back() = f_hi;
  return f;
}

namespace {

std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 1)); }

}  // namespace

MagnitudeTensor magnitude_extract(const HrirArchive& archive, double factor,
                                  const std::vector<double>& freqs, MagnitudeOptions options) {
  archive.validate();
  if (!(factor > 0.0)) throw DomainError("normalization factor must be positive");
  const std::size_t nfft = next_pow2(std::max(options.min_fft, static_cast<std::size_t>(archive.ir_length())));
  const double df = archive.sample_rate / static_cast<double>(nfft);
  const double nyquist = archive.sample_rate / 2.0;

  // bin pair and log-frequency weight for every target
  std::vector<std::size_t> lo(freqs.size());
  std::vector<double> w(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double f = freqs[i] / factor;
    if (!(f > 0.0) || f > nyquist) {
      throw DomainError("target frequency " + std::to_string(freqs[i]) + " Hz / factor " +
                        std::to_string(factor) + " is outside (0, Nyquist]");
    }
    std::size_t k = static_cast<std::size_t>(std::floor(f / df));
    k = std::clamp<std::size_t>(k, 1, nfft / 2 - 1);
    const double fk = df * static_cast<double>(k);
    lo[i] = k;
    w[i] = std::clamp((std::log(f) - std::log(fk)) / (std::log(fk + df) - std::log(fk)), 0.0, 1.0);
  }

  MagnitudeTensor out;
  out.freqs = freqs;
  Eigen::FFT<double> fft;
  std::vector<double> buf(nfft);
  std::vector<std::complex<double>> spec;
  const auto ndir = static_cast<Eigen::Index>(archive.directions.size());
  for (int ear = 0; ear < 2; ++ear) {
    out.db[ear].resize(ndir, static_cast<Eigen::Index>(freqs.size()));
    for (Eigen::Index d = 0; d < ndir; ++d) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (Eigen::Index t = 0; t < archive.ir_length(); ++t) buf[t] = archive.irs[ear](d, t);
      fft.fwd(spec, buf);
      for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double mag = (1.0 - w[i]) * std::abs(spec[lo[i]]) + w[i] * std::abs(spec[lo[i] + 1]);
        const double db = mag > 0.0 ? 20.0 * std::log10(mag) : options.db_floor;
        out.db[ear](d, static_cast<Eigen::Index>(i)) = std::max(db, options.db_floor);
      }
    }
  }
  return out;
}

MagnitudeTargets magnitude_sh_targets(const MagnitudeTensor& tensor, const DirectionSet& dirs, int order) {
  const auto basis = real_sh_basis(order, dirs);
  const LeastSquaresSolver solver(basis.values);
  MagnitudeTargets out;
  out.order = order;
  for (int ear = 0; ear < 2; ++ear) {
    if (tensor.db[ear].rows() != basis.values.rows()) {
      throw DimensionError("magnitude tensor rows do not match the direction set");
    }
    const Eigen::MatrixXd c = solver.solve(tensor.db[ear]);
    out.coeffs[ear] = c.transpose();
    const Eigen::MatrixXd rec = basis.values * c;
    out.smoothing_lsd[ear] = std::sqrt((rec - tensor.db[ear]).array().square().mean());
  }
  return out;
}

Eigen::MatrixXd reconstruct_magnitudes(const Eigen::MatrixXd& coeffs, const DirectionSet& dirs) {
  const int order = static_cast<int>(std::lround(std::sqrt(static_cast<double>(coeffs.cols())))) - 1;
  if (sh_count(order) != coeffs.cols()) throw DimensionError("coefficient count is not a square");
  return real_sh_basis(order, dirs).values * coeffs.transpose();
}

Eigen::VectorXd sinc_upsample(const Eigen::VectorXd& x, int factor) {
  if (factor < 1) throw DomainError("upsampling factor must be >= 1");
  const std::size_t n = static_cast<std::size_t>(x.size());
  if (n == 0) return {};
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  const std::size_t m = n * static_cast<std::size_t>(factor);
  std::vector<std::complex<double>> big(m, {0.0, 0.0});
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k <= half; ++k) big[k] = spec[k];
  for (std::size_t k = 1; k < n - half; ++k) big[m - k] = spec[n - k];
  if (n % 2 == 0 && factor > 1) {
    // split the Nyquist bin so the interpolant stays real
    big[half] *= 0.5;
    big[m - half] = big[half];
  }
  std::vector<std::complex<double>> y;
  fft.inv(y, big);
  Eigen::VectorXd out(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) out[static_cast<Eigen::Index>(i)] = y[i].real() * factor;
  return out;
}

double onset_samples(const Eigen::VectorXd& ir, const OnsetOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) throw DomainError("onset threshold must be in (0, 1)");
  const Eigen::Index head = std::max<Eigen::Index>(1, ir.size() / 10);
  const double rms = std::sqrt(ir.head(head).array().square().mean());
  const double peak = ir.cwiseAbs().maxCoeff();
  if (!(peak > 0.0) || peak < 10.0 * rms) throw DomainError("no dominant arrival");
  // pad to a power of two >= 2n so the periodic interpolant does not wrap
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(next_pow2(2 * static_cast<std::size_t>(ir.size()))));
  padded.head(ir.size()) = ir;
  const Eigen::VectorXd up = sinc_upsample(padded, options.upsample).cwiseAbs();
  const double level = options.threshold * up.maxCoeff();
  for (Eigen::Index j = 0; j < up.size(); ++j) {
    if (up[j] >= level) {
      double t = static_cast<double>(j);
      if (j > 0) t -= (up[j] - level) / (up[j] - up[j - 1]);
      return t / options.upsample;
    }
  }
  throw DomainError("no threshold crossing");
}

std::vector<char> bottom_pole_mask(const DirectionSet& dirs) {
  std::vector<char> mask(dirs.size(), 0);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (std::abs(dirs[i].elevation + kPi / 2.0) < 1e-9) mask[i] = 1;
  }
  return mask;
}

OnsetField detect_onsets(const HrirArchive& archive, OnsetOptions options) {
  archive.validate();
  OnsetField field;
  field.excluded = bottom_pole_mask(archive.directions);
  const auto n = static_cast<Eigen::Index>(archive.directions.size());
  for (int ear = 0; ear < 2; ++ear) {
    field.onsets_us[ear].resize(n);
    for (Eigen::Index d = 0; d < n; ++d) {
      try {
        field.onsets_us[ear][d] = onset_samples(archive.irs[ear].row(d).transpose(), options) /
                                  archive.sample_rate * 1e6;
      } catch (const DomainError& e) {
        throw DomainError("no onset for subject " + archive.subject_id + ", direction " +
                          std::to_string(d) + ", " + (ear == kLeft ? "left" : "right") +
                          " ear: " + e.what());
      }
    }
  }
  return field;
}

Eigen::VectorXd itd_from_onsets(const OnsetField& field) {
  if (field.onsets_us[0].size() != field.onsets_us[1].size()) throw DimensionError("ears differ in size");
  return field.onsets_us[kLeft] - field.onsets_us[kRight];
}

OnsetTargets onset_sh_targets(const OnsetField& field, const DirectionSet& dirs, int order) {
  const auto basis = real_sh_basis(order, dirs);
  const LeastSquaresSolver solver(basis.values);
  OnsetTargets out;
  out.order = order;
  for (int ear = 0; ear < 2; ++ear) {
    if (field.onsets_us[ear].size() != basis.values.rows()) {
      throw DimensionError("onset field does not match the direction set");
    }
    out.coeffs[ear] = solver.solve(field.onsets_us[ear]);
    const Eigen::VectorXd err = basis.values * out.coeffs[ear] - field.onsets_us[ear];
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index d = 0; d < err.size(); ++d) {
      if (!field.excluded.empty() && field.excluded[static_cast<std::size_t>(d)]) continue;
      sum += std::abs(err[d]);
      ++count;
    }
    out.smoothing_us[ear] = count ? sum / count : 0.0;
  }
  return out;
}

namespace {

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  io::write_u32(out, static_cast<std::uint32_t>(m.rows()));
  io::write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) io::write_f64(out, m(i, j));
  }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  const auto r = io::read_u32(in);
  const auto c = io::read_u32(in);
  if (static_cast<std::uint64_t>(r) * c > (1u << 26)) throw ParseError("target matrix too large");
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = io::read_f64(in);
  }
  return m;
}

constexpr char kTargetMagic[8] = {'H', 'R', 'T', 'F', 'T', 'G', 'T', '1'};

}  // namespace

void write_targets(const std::filesystem::path& path, const ShTargets& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kTargetMagic, 8);
  io::write_f64(out, t.norm_factor);
  io::write_u32(out, static_cast<std::uint32_t>(t.magnitude.order));
  for (int ear = 0; ear < 2; ++ear) {
    write_matrix(out, t.magnitude.coeffs[ear]);
    io::write_f64(out, t.magnitude.smoothing_lsd[ear]);
  }
  io::write_u32(out, static_cast<std::uint32_t>(t.onset.order));
  for (int ear = 0; ear < 2; ++ear) {
    write_matrix(out, t.onset.coeffs[ear]);
    io::write_f64(out, t.onset.smoothing_us[ear]);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ShTargets read_targets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kTargetMagic)) {
    throw ParseError(path.string() + ": not a target file");
  }
  ShTargets t;
  t.norm_factor = io::read_f64(in);
  t.magnitude.order = static_cast<int>(io::read_u32(in));
  for (int ear = 0; ear < 2; ++ear) {
    t.magnitude.coeffs[ear] = read_matrix(in);
    t.magnitude.smoothing_lsd[ear] = io::read_f64(in);
  }
  t.onset.order = static_cast<int>(io::read_u32(in));
  for (int ear = 0; ear < 2; ++ear) {
    t.onset.coeffs[ear] = read_matrix(in);
    t.onset.smoothing_us[ear] = io::read_f64(in);
  }
  return t;
}

}  // namespace hrtfp
