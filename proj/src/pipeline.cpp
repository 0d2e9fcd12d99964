#include "hrtfp/pipeline.hpp"

#include "hrtfp/binary_io.hpp"
#include "hrtfp/errors.hpp"
#include "hrtfp/spherical_harmonics.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace hrtfp {

FeatureExtractor::FeatureExtractor(FeatureOptions options) : options_(std::move(options)) {
  options_.cap.validate();
  if (options_.crop_half_angle < options_.cap.half_angle) {
    throw DomainError("crop angle must cover the cap");
  }
  grid_ = uniform_cap_grid(options_.cap.half_angle, options_.grid_size);
  fitter_ = std::make_shared<const CapFitter>(cap_basis(options_.cap, grid_));
}

std::array<EarFeatures, 2> FeatureExtractor::operator()(const TriMesh& mesh, const Direction& left,
                                                        const Direction& right) const {
  const auto map = spherical_parameterize(mesh, options_.parameterize);
  const auto top = map_direction(map, Eigen::Vector3d::UnitZ());
  std::array<EarFeatures, 2> out;
  const std::array<Direction, 2> ears{left, right};
  for (int e = 0; e < 2; ++e) {
    const auto center = map_direction(map, ears[e].unit_vector());
    const auto cap = crop_cap(map, center, options_.crop_half_angle, top);
    const auto patch = remesh_cap(cap, grid_, options_.cap);
    out[e] = ear_sch_features(patch, static_cast<EarSide>(e), *fitter_);
  }
  return out;
}

namespace {
constexpr char kFeatureMagic[8] = {'H', 'R', 'T', 'F', 'S', 'C', 'H', '1'};
}

void write_features(const std::filesystem::path& path, const std::array<EarFeatures, 2>& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kFeatureMagic, 8);
  for (const auto& f : features) {
    io::write_u32(out, static_cast<std::uint32_t>(f.sch_xyz.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(f.sch_xyz.cols()));
    for (double v : f.sch_xyz.reshaped()) io::write_f64(out, v);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::array<EarFeatures, 2> read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kFeatureMagic)) throw ParseError(path.string() + ": not a feature file");
  std::array<EarFeatures, 2> out;
  for (int e = 0; e < 2; ++e) {
    const auto rows = io::read_u32(in);
    const auto cols = io::read_u32(in);
    if (!in || rows > 100000 || cols > 16) throw ParseError(path.string() + ": bad feature dimensions");
    out[e].side = static_cast<EarSide>(e);
    out[e].sch_xyz.resize(rows, cols);
    for (double& v : out[e].sch_xyz.reshaped()) v = io::read_f64(in);
  }
  if (!in) throw ParseError(path.string() + ": truncated feature file");
  return out;
}

ShTargets compute_targets(const HrirArchive& archive, double norm_factor, const TargetOptions& options,
                          SubjectReference* reference) {
  ShTargets t;
  t.norm_factor = norm_factor;
  auto tensor = magnitude_extract(archive, norm_factor, options.freqs, options.magnitude);
  t.magnitude = magnitude_sh_targets(tensor, archive.directions, options.magnitude_order);
  auto onsets = detect_onsets(archive, options.onset);
  t.onset = onset_sh_targets(onsets, archive.directions, options.onset_order);
  if (reference) {
    reference->directions = archive.directions;
    reference->magnitude = std::move(tensor);
    reference->onsets = std::move(onsets);
  }
  return t;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& samples) {
  if (samples.cols() == 0) throw DomainError("standardizer needs at least one sample");
  Standardizer s;
  s.mean = samples.rowwise().mean();
  s.scale = ((samples.colwise() - s.mean).array().square().rowwise().mean()).sqrt().matrix();
  // near-constant features would blow up on unseen subjects; floor their
  // spread relative to the widest feature
  const double widest = s.scale.maxCoeff();
  for (auto& v : s.scale) {
    if (!(widest > 1e-12)) {
      v = 1.0;
    } else {
      v = std::max(v, 1e-3 * widest);
    }
  }
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw DimensionError("standardizer input size mismatch");
  return ((x - mean).array() / scale.array()).matrix();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // chained splitmix64 finalizer; order matters, so (s, a) and (a, s) differ
  const auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t z = mix(seed);
  for (std::uint64_t w : {a, b}) z = mix(z ^ w);
  return z;
}

namespace {

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) { return m.reshaped(); }

Eigen::MatrixXd encoder_input(const TrainedModel& model, const Eigen::MatrixXd& sch) {
  const Eigen::VectorXd z = model.sch.apply(flatten(sch));
  return z.reshaped(sch.rows(), sch.cols()).transpose();  // channels x length
}

double rms(const std::vector<Eigen::VectorXd>& centered) {
  double s = 0.0;
  Eigen::Index n = 0;
  for (const auto& v : centered) {
    s += v.squaredNorm();
    n += v.size();
  }
  const double r = n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
  return r > 1e-12 ? r : 1.0;
}

void add_magnitude_rows(nn::MagnitudeDataset& ds, const TrainedModel& m, const SubjectData& s) {
  const Eigen::VectorXd anthro = m.anthro.apply(s.anthro);
  for (int e = 0; e < 2; ++e) {
    ds.sch.push_back(encoder_input(m, s.sch[e]));
    const int idx = static_cast<int>(ds.sch.size()) - 1;
    const auto& coeffs = s.targets.magnitude.coeffs[e];
    if (coeffs.rows() != nn::kFreqCount || coeffs.cols() != nn::kMagnitudeOutputs) {
      throw DimensionError("subject " + s.id + " has magnitude targets of the wrong shape");
    }
    for (int f = 0; f < nn::kFreqCount; ++f) {
      nn::MagnitudeDataset::Row r;
      r.sch = idx;
      r.anthro = anthro;
      r.freq = f;
      r.ear = e;
      r.target = (coeffs.row(f).transpose() - m.magnitude_mean[e].row(f).transpose()) / m.magnitude_scale;
      ds.rows.push_back(std::move(r));
    }
  }
}

void add_onset_rows(nn::OnsetDataset& ds, const TrainedModel& m, const SubjectData& s) {
  const Eigen::VectorXd anthro = m.anthro.apply(s.anthro);
  for (int e = 0; e < 2; ++e) {
    if (s.targets.onset.coeffs[e].size() != nn::kOnsetOutputs) {
      throw DimensionError("subject " + s.id + " has onset targets of the wrong size");
    }
    ds.rows.push_back({anthro, e, (s.targets.onset.coeffs[e] - m.onset_mean[e]) / m.onset_scale});
  }
}

void check_subject(const SubjectData& s) {
  if (s.anthro.size() != nn::kAnthroCount) {
    throw DimensionError("subject " + s.id + " needs " + std::to_string(nn::kAnthroCount) + " measurements");
  }
  for (const auto& m : s.sch) {
    if (m.cols() != 3) throw DimensionError("subject " + s.id + " SCH features need 3 columns");
  }
}

}  // namespace

ShTargets mean_targets(const std::vector<const SubjectData*>& subjects) {
  if (subjects.empty()) throw DomainError("mean of no subjects");
  ShTargets t;
  t.norm_factor = 1.0;
  for (int e = 0; e < 2; ++e) {
    t.magnitude.coeffs[e] = Eigen::MatrixXd::Zero(subjects[0]->targets.magnitude.coeffs[e].rows(),
                                                  subjects[0]->targets.magnitude.coeffs[e].cols());
    t.onset.coeffs[e] = Eigen::VectorXd::Zero(subjects[0]->targets.onset.coeffs[e].size());
    for (const auto* s : subjects) {
      t.magnitude.coeffs[e] += s->targets.magnitude.coeffs[e];
      t.onset.coeffs[e] += s->targets.onset.coeffs[e];
    }
    t.magnitude.coeffs[e] /= static_cast<double>(subjects.size());
    t.onset.coeffs[e] /= static_cast<double>(subjects.size());
  }
  t.magnitude.order = subjects[0]->targets.magnitude.order;
  t.onset.order = subjects[0]->targets.onset.order;
  return t;
}

namespace {

// Targets are deviations from the training mean, so a zero output layer
// starts every network at the mean predictor.
nn::ModelParams residual_init(nn::NetKind kind, std::uint64_t seed, const nn::NetShape& shape) {
  auto p = nn::init_params(kind, seed, shape);
  p.tensors[p.tensors.size() - 2].setZero();
  return p;
}

}  // namespace

TrainedModel train_models(const std::vector<const SubjectData*>& train, const SubjectData* validation,
                          const LearnConfig& config, std::uint64_t seed) {
  if (train.empty()) throw DomainError("no training subjects");
  for (const auto* s : train) check_subject(*s);
  if (validation) check_subject(*validation);

  TrainedModel m;
  const auto n = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixXd anthro(nn::kAnthroCount, n);
  const Eigen::Index sch_size = train[0]->sch[0].size();
  Eigen::MatrixXd sch(sch_size, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    anthro.col(i) = train[static_cast<std::size_t>(i)]->anthro;
    for (int e = 0; e < 2; ++e) {
      const auto& f = train[static_cast<std::size_t>(i)]->sch[e];
      if (f.size() != sch_size) throw DimensionError("SCH feature sizes differ between subjects");
      sch.col(2 * i + e) = flatten(f);
    }
  }
  m.anthro = Standardizer::fit(anthro);
  m.sch = Standardizer::fit(sch);

  const auto mean = mean_targets(train);
  std::vector<Eigen::VectorXd> mag_res, onset_res;
  for (int e = 0; e < 2; ++e) {
    m.magnitude_mean[e] = mean.magnitude.coeffs[e];
    m.onset_mean[e] = mean.onset.coeffs[e];
    for (const auto* s : train) {
      mag_res.push_back((s->targets.magnitude.coeffs[e] - m.magnitude_mean[e]).reshaped());
      onset_res.push_back(s->targets.onset.coeffs[e] - m.onset_mean[e]);
    }
  }
  m.magnitude_scale = rms(mag_res);
  m.onset_scale = rms(onset_res);

  nn::MagnitudeDataset mag_train, mag_val;
  nn::OnsetDataset onset_train, onset_val;
  for (const auto* s : train) {
    add_magnitude_rows(mag_train, m, *s);
    add_onset_rows(onset_train, m, *s);
  }
  if (validation) {
    add_magnitude_rows(mag_val, m, *validation);
    add_onset_rows(onset_val, m, *validation);
  }

  nn::TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, 1);
  auto mag = nn::train(mag_train, validation ? &mag_val : nullptr,
                       residual_init(nn::NetKind::kMagnitude, derive_seed(seed, 2), config.shape), tc);
  tc.seed = derive_seed(seed, 3);
  auto on = nn::train(onset_train, validation ? &onset_val : nullptr,
                      residual_init(nn::NetKind::kOnset, derive_seed(seed, 4), config.shape), tc);
  m.magnitude = std::move(mag.best);
  m.magnitude_history = std::move(mag.history);
  m.onset = std::move(on.best);
  m.onset_history = std::move(on.history);
  return m;
}

ShTargets predict(const TrainedModel& model, const SubjectData& subject) {
  check_subject(subject);
  const Eigen::VectorXd anthro = model.anthro.apply(subject.anthro);
  nn::MagnitudeBatch mb;
  mb.anthro.resize(nn::kAnthroCount, 2 * nn::kFreqCount);
  mb.freq = Eigen::MatrixXd::Zero(nn::kFreqCount, 2 * nn::kFreqCount);
  mb.ear = Eigen::MatrixXd::Zero(2, 2 * nn::kFreqCount);
  nn::OnsetBatch ob;
  ob.anthro.resize(nn::kAnthroCount, 2);
  ob.ear = Eigen::MatrixXd::Identity(2, 2);
  for (int e = 0; e < 2; ++e) {
    mb.sch.push_back(encoder_input(model, subject.sch[e]));
    ob.anthro.col(e) = anthro;
    for (int f = 0; f < nn::kFreqCount; ++f) {
      const int col = e * nn::kFreqCount + f;
      mb.sch_of_row.push_back(e);
      mb.anthro.col(col) = anthro;
      mb.freq(f, col) = 1.0;
      mb.ear(e, col) = 1.0;
    }
  }
  const Eigen::MatrixXd mag = nn::forward_magnitude(model.magnitude, mb);
  const Eigen::MatrixXd on = nn::forward_onset(model.onset, ob);

  ShTargets t;
  t.norm_factor = subject.targets.norm_factor;
  for (int e = 0; e < 2; ++e) {
    t.magnitude.coeffs[e] =
        model.magnitude_mean[e] + model.magnitude_scale * mag.middleCols(e * nn::kFreqCount, nn::kFreqCount).transpose();
    t.onset.coeffs[e] = model.onset_mean[e] + model.onset_scale * on.col(e);
  }
  return t;
}

SubjectReport evaluate(const SubjectData& subject, const ShTargets& prediction) {
  const auto& ref = subject.reference;
  SubjectReport r;
  r.subject_id = subject.id;
  r.directions = ref.directions;
  r.freqs = ref.magnitude.freqs;
  OnsetField predicted;
  predicted.excluded = ref.onsets.excluded;
  const auto onset_order = static_cast<int>(std::lround(std::sqrt(prediction.onset.coeffs[0].size()))) - 1;
  const auto basis = real_sh_basis(onset_order, ref.directions);
  for (int e = 0; e < 2; ++e) {
    const Eigen::MatrixXd db = reconstruct_magnitudes(prediction.magnitude.coeffs[e], ref.directions);
    r.lsd[e] = lsd(ref.magnitude.db[e], db, MagnitudeScale::kDecibel);
    predicted.onsets_us[e] = basis.values * prediction.onset.coeffs[e];
    r.smoothing_lsd_db[e] = subject.targets.magnitude.smoothing_lsd[e];
    r.smoothing_onset_us[e] = subject.targets.onset.smoothing_us[e];
  }
  r.onset = onset_itd_errors(predicted, ref.onsets);
  return r;
}

namespace {

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw ParseError("ragged matrix in model file");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix) {
  return stem.parent_path() / (stem.filename().string() + suffix);
}

}  // namespace

void write_model(const std::filesystem::path& stem, const TrainedModel& model) {
  nn::write_params(with_suffix(stem, "_magnitude.hnn"), model.magnitude);
  nn::write_params(with_suffix(stem, "_onset.hnn"), model.onset);
  nn::write_history_csv(with_suffix(stem, "_magnitude_loss.csv"), model.magnitude_history);
  nn::write_history_csv(with_suffix(stem, "_onset_loss.csv"), model.onset_history);
  nlohmann::json j;
  j["anthro_mean"] = vec_json(model.anthro.mean);
  j["anthro_scale"] = vec_json(model.anthro.scale);
  j["sch_mean"] = vec_json(model.sch.mean);
  j["sch_scale"] = vec_json(model.sch.scale);
  j["magnitude_scale"] = model.magnitude_scale;
  j["onset_scale"] = model.onset_scale;
  j["magnitude_best_epoch"] = model.magnitude_history.best_epoch;
  j["onset_best_epoch"] = model.onset_history.best_epoch;
  for (int e = 0; e < 2; ++e) {
    const std::string ear = e == kLeft ? "left" : "right";
    j["magnitude_mean_" + ear] = to_json(model.magnitude_mean[e]);
    j["onset_mean_" + ear] = vec_json(model.onset_mean[e]);
  }
  const auto path = with_suffix(stem, "_model.json");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

TrainedModel read_model(const std::filesystem::path& stem) {
  TrainedModel m;
  m.magnitude = nn::read_params(with_suffix(stem, "_magnitude.hnn"));
  m.onset = nn::read_params(with_suffix(stem, "_onset.hnn"));
  const auto path = with_suffix(stem, "_model.json");
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    m.anthro = {vec_from(j.at("anthro_mean")), vec_from(j.at("anthro_scale"))};
    m.sch = {vec_from(j.at("sch_mean")), vec_from(j.at("sch_scale"))};
    m.magnitude_scale = j.at("magnitude_scale").get<double>();
    m.onset_scale = j.at("onset_scale").get<double>();
    m.magnitude_history.best_epoch = j.at("magnitude_best_epoch").get<int>();
    m.onset_history.best_epoch = j.at("onset_best_epoch").get<int>();
    for (int e = 0; e < 2; ++e) {
      const std::string ear = e == kLeft ? "left" : "right";
      m.magnitude_mean[e] = matrix_from(j.at("magnitude_mean_" + ear));
      m.onset_mean[e] = vec_from(j.at("onset_mean_" + ear));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
  return m;
}

std::vector<FoldResult> loocv(const std::vector<SubjectData>& subjects, const LearnConfig& config) {
  const std::size_t n = subjects.size();
  if (n < 3) throw DomainError("leave-one-out needs at least 3 subjects");
  std::vector<FoldResult> results(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      auto& r = results[i];
      const std::size_t v = (i + n / 2) % n;
      r.held_out = subjects[i].id;
      r.validation = subjects[v].id;
      try {
        std::vector<const SubjectData*> train, rest;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == i) continue;
          rest.push_back(&subjects[k]);
          if (k != v) train.push_back(&subjects[k]);
        }
        r.model = train_models(train, &subjects[v], config, derive_seed(config.seed, i));
        r.prediction = predict(r.model, subjects[i]);
        r.baseline = mean_targets(rest);
        r.baseline.norm_factor = subjects[i].targets.norm_factor;
        r.report = evaluate(subjects[i], r.prediction);
        r.baseline_report = evaluate(subjects[i], r.baseline);
      } catch (const std::exception& ex) {
        r.error = "fold " + std::to_string(i + 1) + " (held out " + r.held_out + "): " + ex.what();
      }
    }
  };
  const int jobs = std::clamp(config.jobs, 1, static_cast<int>(n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

}  // namespace hrtfp
