#include "hrtfp/evaluation.hpp"

#include "hrtfp/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace hrtfp {

LsdReport lsd(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& predicted, MagnitudeScale scale) {
  if (reference.rows() != predicted.rows() || reference.cols() != predicted.cols()) {
    throw DimensionError("LSD inputs differ in shape");
  }
  if (reference.size() == 0) throw DimensionError("LSD of an empty grid");
  Eigen::MatrixXd d2;
  if (scale == MagnitudeScale::kLinear) {
    if (!(reference.array() > 0.0).all() || !(predicted.array() > 0.0).all()) {
      throw DomainError("LSD needs positive linear magnitudes");
    }
    d2 = (20.0 * (reference.array() / predicted.array()).log10()).square().matrix();
  } else {
    d2 = (reference - predicted).array().square().matrix();
  }
  if (!d2.allFinite()) throw DomainError("LSD inputs are not finite");
  LsdReport r;
  r.per_direction = d2.rowwise().mean().cwiseSqrt();
  r.per_frequency = d2.colwise().mean().transpose().cwiseSqrt();
  r.global = std::sqrt(d2.mean());
  return r;
}

namespace {

void mean_std(const Eigen::VectorXd& v, const std::vector<char>& skip, double& mean, double& sd) {
  double s = 0.0, s2 = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (skip[static_cast<std::size_t>(i)]) continue;
    s += v(i);
    ++n;
  }
  if (n == 0) throw DomainError("no direction left after exclusion");
  mean = s / n;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!skip[static_cast<std::size_t>(i)]) s2 += (v(i) - mean) * (v(i) - mean);
  }
  sd = std::sqrt(s2 / n);
}

}  // namespace

OnsetReport onset_itd_errors(const OnsetField& predicted, const OnsetField& reference, bool apply_exclusion) {
  const auto n = reference.onsets_us[0].size();
  for (int e = 0; e < 2; ++e) {
    if (predicted.onsets_us[e].size() != n || reference.onsets_us[e].size() != n) {
      throw DimensionError("onset fields cover different direction sets");
    }
  }
  OnsetReport r;
  r.excluded = reference.excluded;
  if (r.excluded.size() != static_cast<std::size_t>(n)) r.excluded.assign(static_cast<std::size_t>(n), 0);
  const std::vector<char> skip = apply_exclusion ? r.excluded : std::vector<char>(static_cast<std::size_t>(n), 0);
  for (int e = 0; e < 2; ++e) {
    r.onset_error_us[e] = (predicted.onsets_us[e] - reference.onsets_us[e]).cwiseAbs();
    mean_std(r.onset_error_us[e], skip, r.onset_mean_us[e], r.onset_std_us[e]);
  }
  r.itd_error_us = (itd_from_onsets(predicted) - itd_from_onsets(reference)).cwiseAbs();
  mean_std(r.itd_error_us, skip, r.itd_mean_us, r.itd_std_us);
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class CsvFile {
 public:
  explicit CsvFile(std::filesystem::path path) : path_(std::move(path)), out_(path_) {
    if (!out_) throw IoError("cannot write " + path_.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace

std::vector<std::filesystem::path> emit_report(const std::vector<SubjectReport>& reports,
                                               const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  for (const auto& r : reports) {
    const auto nd = static_cast<Eigen::Index>(r.directions.size());
    if (r.lsd[0].per_direction.size() != nd || r.onset.itd_error_us.size() != nd) {
      throw DimensionError("report for " + r.subject_id + " does not match its direction set");
    }
    auto path = out_dir / (r.subject_id + "_lsd_direction.csv");
    CsvFile dir(path);
    dir.row({"azimuth_deg", "elevation_deg", "lsd_left_db", "lsd_right_db"});
    for (Eigen::Index i = 0; i < nd; ++i) {
      const auto& d = r.directions[static_cast<std::size_t>(i)];
      dir.row({fmt(rad2deg(d.azimuth)), fmt(rad2deg(d.elevation)), fmt(r.lsd[0].per_direction(i)),
               fmt(r.lsd[1].per_direction(i))});
    }
    dir.close();
    written.push_back(path);

    path = out_dir / (r.subject_id + "_lsd_frequency.csv");
    CsvFile freq(path);
    freq.row({"frequency_hz", "lsd_left_db", "lsd_right_db"});
    for (std::size_t k = 0; k < r.freqs.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      freq.row({fmt(r.freqs[k]), fmt(r.lsd[0].per_frequency(kk)), fmt(r.lsd[1].per_frequency(kk))});
    }
    freq.close();
    written.push_back(path);

    path = out_dir / (r.subject_id + "_onset.csv");
    CsvFile on(path);
    on.row({"azimuth_deg", "elevation_deg", "excluded", "onset_error_left_us", "onset_error_right_us",
            "itd_error_us"});
    for (Eigen::Index i = 0; i < nd; ++i) {
      const auto& d = r.directions[static_cast<std::size_t>(i)];
      on.row({fmt(rad2deg(d.azimuth)), fmt(rad2deg(d.elevation)),
              r.onset.excluded[static_cast<std::size_t>(i)] ? "1" : "0", fmt(r.onset.onset_error_us[0](i)),
              fmt(r.onset.onset_error_us[1](i)), fmt(r.onset.itd_error_us(i))});
    }
    on.close();
    written.push_back(path);
  }

  const auto path = out_dir / "summary.csv";
  CsvFile sum(path);
  sum.row({"subject_id", "lsd_left_db", "lsd_right_db", "onset_left_us", "onset_left_std_us", "onset_right_us",
           "onset_right_std_us", "itd_us", "itd_std_us", "smoothing_lsd_left_db", "smoothing_lsd_right_db",
           "smoothing_onset_left_us", "smoothing_onset_right_us"});
  for (const auto& r : reports) {
    sum.row({r.subject_id, fmt(r.lsd[0].global), fmt(r.lsd[1].global), fmt(r.onset.onset_mean_us[0]),
             fmt(r.onset.onset_std_us[0]), fmt(r.onset.onset_mean_us[1]), fmt(r.onset.onset_std_us[1]),
             fmt(r.onset.itd_mean_us), fmt(r.onset.itd_std_us), fmt(r.smoothing_lsd_db[0]),
             fmt(r.smoothing_lsd_db[1]), fmt(r.smoothing_onset_us[0]), fmt(r.smoothing_onset_us[1])});
  }
  sum.close();
  written.push_back(path);
  return written;
}

SummaryMeans summary_means(const std::vector<SubjectReport>& reports) {
  SummaryMeans m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    for (int e = 0; e < 2; ++e) {
      m.lsd_db[e] += r.lsd[e].global;
      m.onset_us[e] += r.onset.onset_mean_us[e];
    }
    m.itd_us += r.onset.itd_mean_us;
  }
  const double n = static_cast<double>(reports.size());
  for (int e = 0; e < 2; ++e) {
    m.lsd_db[e] /= n;
    m.onset_us[e] /= n;
  }
  m.itd_us /= n;
  return m;
}

}  // namespace hrtfp
