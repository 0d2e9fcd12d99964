#include "commands.hpp"

#include "hrtfp/anthro.hpp"
#include "hrtfp/errors.hpp"
#include "hrtfp/evaluation.hpp"
#include "hrtfp/hrtf.hpp"
#include "hrtfp/mesh.hpp"
#include "hrtfp/pipeline.hpp"
#include "hrtfp/synthetic.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace hrtfp::cli {

namespace fs = std::filesystem;

std::filesystem::path dataset_root(const RunOptions& run) {
  return run.config.dataset_root.empty() ? run.out / "dataset" : fs::path(run.config.dataset_root);
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["format"] = "hrtfp-dataset-1";
  j["anthro"] = m.anthro;
  j["subjects"] = nlohmann::json::array();
  for (const auto& s : m.subjects) {
    j["subjects"].push_back({{"id", s.id},
                             {"hrir", s.hrir},
                             {"mesh", s.mesh},
                             {"left_ear", {rad2deg(s.left_ear.azimuth), rad2deg(s.left_ear.elevation)}},
                             {"right_ear", {rad2deg(s.right_ear.azimuth), rad2deg(s.right_ear.elevation)}}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "hrtfp-dataset-1") throw ParseError(path.string() + ": unknown format");
    m.anthro = j.at("anthro").get<std::string>();
    auto ear = [](const nlohmann::json& a) {
      if (a.size() != 2) throw ParseError("ear direction needs [azimuth_deg, elevation_deg]");
      return Direction(deg2rad(a[0].get<double>()), deg2rad(a[1].get<double>()));
    };
    for (const auto& s : j.at("subjects")) {
      m.subjects.push_back({s.at("id").get<std::string>(), s.at("hrir").get<std::string>(),
                            s.at("mesh").get<std::string>(), ear(s.at("left_ear")), ear(s.at("right_ear"))});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
  return m;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) throw Error("SHA-256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void echo_config(const RunOptions& run, const std::string& command) {
  make_dirs(run.out);
  spill(run.out / (command + "_config.ini"), run.config.to_ini());
}

// Runs fn(i) for i < n on up to `jobs` threads; returns one message per
// index (empty on success) so logs come out in input order.
std::vector<std::string> for_each_subject(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const int t = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (t == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return errors;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct Dataset {
  fs::path root;
  DatasetManifest manifest;
  std::map<std::string, AnthroRecord> anthro;
  std::string reference;
};

Dataset open_dataset(const RunOptions& run) {
  Dataset d;
  d.root = dataset_root(run);
  d.manifest = read_manifest(d.root / "manifest.json");
  if (d.manifest.subjects.empty()) throw DomainError("dataset " + d.root.string() + " lists no subjects");
  for (auto& r : read_anthro_csv(d.root / d.manifest.anthro, run.config.anthro_columns)) {
    d.anthro.emplace(r.subject_id, std::move(r));
  }
  d.reference = run.config.reference_subject.empty() ? d.manifest.subjects.front().id : run.config.reference_subject;
  if (!d.anthro.count(d.reference)) throw DomainError("reference subject " + d.reference + " has no anthro row");
  return d;
}

const AnthroRecord& anthro_of(const Dataset& d, const std::string& id) {
  const auto it = d.anthro.find(id);
  if (it == d.anthro.end()) throw DomainError("subject " + id + " has no anthro row");
  return it->second;
}

fs::path prepared_dir(const RunOptions& run, const std::string& id) { return run.out / "prepared" / id; }

std::string anthro_text(const AnthroRecord& r) {
  std::string s = r.subject_id;
  for (Eigen::Index i = 0; i < r.values.size(); ++i) s += "," + r.names[static_cast<std::size_t>(i)] + "=" + fmt(r.values(i));
  return s;
}

// Everything a subject's prepared outputs depend on.
std::string input_digest(const RunOptions& run, const Dataset& d, const SubjectEntry& s) {
  std::string h;
  const auto entries = run.config.entries();
  for (const char* section : {"dataset", "frequency", "orders", "features", "onset", "head_radius"}) {
    for (const auto& [key, value] : entries.at(section)) {
      if (std::string(section) == "dataset" && key == "root") continue;
      h += std::string(section) + "." + key + "=" + value + "\n";
    }
  }
  const auto hrir = d.root / s.hrir;
  const auto hrir_text = slurp(hrir);
  std::string blob;
  try {
    blob = nlohmann::json::parse(hrir_text).at("blob").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(hrir.string() + ": " + ex.what());
  }
  h += "hrir " + sha256_hex(hrir_text) + "\n";
  h += "blob " + sha256_file(hrir.parent_path() / blob) + "\n";
  h += "mesh " + sha256_file(d.root / s.mesh) + "\n";
  h += "ears " + fmt(s.left_ear.azimuth) + " " + fmt(s.left_ear.elevation) + " " + fmt(s.right_ear.azimuth) + " " +
       fmt(s.right_ear.elevation) + "\n";
  h += "anthro " + anthro_text(anthro_of(d, s.id)) + "\n";
  h += "reference " + anthro_text(anthro_of(d, d.reference)) + "\n";
  return sha256_hex(h);
}

std::string stamp_text(const std::string& inputs, const fs::path& dir) {
  return "inputs " + inputs + "\nfeatures.bin " + sha256_file(dir / "features.bin") + "\ntargets.bin " +
         sha256_file(dir / "targets.bin") + "\n";
}

bool up_to_date(const fs::path& dir, const std::string& inputs) {
  const auto stamp = dir / "inputs.sha256";
  if (!fs::exists(stamp) || !fs::exists(dir / "features.bin") || !fs::exists(dir / "targets.bin")) return false;
  return slurp(stamp) == stamp_text(inputs, dir);
}

std::vector<SubjectData> load_subjects(const RunOptions& run, const Dataset& d, std::vector<std::string>& errors) {
  const auto& subjects = d.manifest.subjects;
  std::vector<SubjectData> out(subjects.size());
  const auto target_opts = run.config.target_options();
  errors = for_each_subject(subjects.size(), run.jobs, [&](std::size_t i) {
    const auto& s = subjects[i];
    const auto dir = prepared_dir(run, s.id);
    if (!fs::exists(dir / "targets.bin")) throw IoError("no prepared targets in " + dir.string() + " (run prepare)");
    auto& sd = out[i];
    sd.id = s.id;
    sd.anthro = anthro_of(d, s.id).values;
    const auto feats = read_features(dir / "features.bin");
    sd.sch = {feats[0].sch_xyz, feats[1].sch_xyz};
    sd.targets = read_targets(dir / "targets.bin");
    const auto archive = read_archive(d.root / s.hrir);
    compute_targets(archive, sd.targets.norm_factor, target_opts, &sd.reference);
  });
  return out;
}

void report_failures(const std::vector<std::string>& errors, const std::vector<SubjectEntry>& subjects,
                     const std::string& command, std::ostream& log, int& failed) {
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    log << command << ": " << subjects[i].id << " failed: " << errors[i] << '\n';
    ++failed;
  }
}

void write_means(const fs::path& path, const std::vector<std::pair<std::string, SummaryMeans>>& rows) {
  std::string text = "predictor,lsd_left_db,lsd_right_db,lsd_mean_db,onset_left_us,onset_right_us,itd_us\n";
  for (const auto& [name, m] : rows) {
    text += name + "," + fmt(m.lsd_db[0]) + "," + fmt(m.lsd_db[1]) + "," + fmt(m.lsd_mean()) + "," + fmt(m.onset_us[0]) +
            "," + fmt(m.onset_us[1]) + "," + fmt(m.itd_us) + "\n";
  }
  spill(path, text);
}

void log_means(std::ostream& log, const std::string& name, const SummaryMeans& m) {
  log << "  " << name << ": LSD left " << fmt(m.lsd_db[0]) << " dB, right " << fmt(m.lsd_db[1]) << " dB; onset left "
      << fmt(m.onset_us[0]) << " us, right " << fmt(m.onset_us[1]) << " us; ITD " << fmt(m.itd_us) << " us\n";
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(slurp(path)); }

int cmd_synth(const RunOptions& run, std::ostream& log) {
  const auto& c = run.config;
  echo_config(run, "synth");
  const auto root = dataset_root(run);
  make_dirs(root);
  const auto pop = sphere_population(c.synth_subjects, c.synth_seed, c.synth_radius_min, c.synth_radius_max);
  const auto dirs = ring_grid(static_cast<std::size_t>(c.synth_directions));
  SyntheticOptions so;
  so.sample_rate = c.synth_sample_rate;
  so.ir_length = c.synth_ir_length;
  so.generation_fft = std::max(512, 2 * c.synth_ir_length);
  so.mesh_level = c.synth_mesh_level;

  DatasetManifest manifest;
  std::vector<AnthroRecord> anthro(pop.size());
  manifest.subjects.resize(pop.size());
  const auto errors = for_each_subject(pop.size(), run.jobs, [&](std::size_t i) {
    const auto& spec = pop[i];
    const auto s = gen_subject(spec, dirs, so);
    make_dirs(root / spec.subject_id);
    write_archive(root / spec.subject_id / "hrir", s.archive);
    save_mesh(root / spec.subject_id / "head.mesh", s.mesh);
    anthro[i] = s.anthro;
    manifest.subjects[i] = {spec.subject_id, spec.subject_id + "/hrir.json", spec.subject_id + "/head.mesh", s.left_ear,
                            s.right_ear};
  });
  int failed = 0;
  report_failures(errors, manifest.subjects, "synth", log, failed);
  if (failed) return 1;
  write_anthro_csv(root / manifest.anthro, anthro);
  write_manifest(root / "manifest.json", manifest);
  log << "synth: wrote " << pop.size() << " subjects to " << root.string() << '\n';
  return 0;
}

int cmd_prepare(const RunOptions& run, std::ostream& log) {
  echo_config(run, "prepare");
  const auto d = open_dataset(run);
  const auto& subjects = d.manifest.subjects;
  const auto target_opts = run.config.target_options();
  const auto& anthro_ref = anthro_of(d, d.reference);

  std::vector<std::string> digests(subjects.size());
  std::vector<char> stale(subjects.size(), 0);
  auto errors = for_each_subject(subjects.size(), run.jobs, [&](std::size_t i) {
    digests[i] = input_digest(run, d, subjects[i]);
    stale[i] = !up_to_date(prepared_dir(run, subjects[i].id), digests[i]);
  });

  std::unique_ptr<FeatureExtractor> extractor;
  if (std::any_of(stale.begin(), stale.end(), [](char s) { return s; })) {
    extractor = std::make_unique<FeatureExtractor>(run.config.feature_options());
  }
  std::vector<std::string> notes(subjects.size());
  const auto work_errors = for_each_subject(subjects.size(), run.jobs, [&](std::size_t i) {
    if (!errors[i].empty()) return;
    const auto& s = subjects[i];
    const auto dir = prepared_dir(run, s.id);
    if (!stale[i]) {
      notes[i] = "up to date";
      return;
    }
    const auto& anthro = anthro_of(d, s.id);
    const auto mesh = load_mesh(d.root / s.mesh);
    const auto archive = read_archive(d.root / s.hrir);
    const auto feats = (*extractor)(mesh, s.left_ear, s.right_ear);
    const auto targets =
        compute_targets(archive, normalization_factor(anthro, anthro_ref, run.config.head_radius), target_opts);
    make_dirs(dir);
    fs::remove(dir / "inputs.sha256");
    write_features(dir / "features.bin", feats);
    write_targets(dir / "targets.bin", targets);
    spill(dir / "smoothing.csv", "ear,magnitude_lsd_db,onset_us\nleft," + fmt(targets.magnitude.smoothing_lsd[0]) + "," +
                                     fmt(targets.onset.smoothing_us[0]) + "\nright," +
                                     fmt(targets.magnitude.smoothing_lsd[1]) + "," + fmt(targets.onset.smoothing_us[1]) +
                                     "\n");
    spill(dir / "inputs.sha256", stamp_text(digests[i], dir));
    notes[i] = "prepared (norm factor " + fmt(targets.norm_factor) + ", smoothing " +
               fmt(targets.magnitude.smoothing_lsd[0]) + "/" + fmt(targets.magnitude.smoothing_lsd[1]) + " dB, " +
               fmt(targets.onset.smoothing_us[0]) + "/" + fmt(targets.onset.smoothing_us[1]) + " us)";
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) errors[i] = work_errors[i];
  }
  int failed = 0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (errors[i].empty()) log << "prepare: " << subjects[i].id << " " << notes[i] << '\n';
  }
  report_failures(errors, subjects, "prepare", log, failed);
  log << "prepare: " << subjects.size() - static_cast<std::size_t>(failed) << " of " << subjects.size()
      << " subjects ready\n";
  return failed ? 1 : 0;
}

int cmd_train(const RunOptions& run, const std::string& validation_id, std::ostream& log) {
  echo_config(run, "train");
  const auto d = open_dataset(run);
  std::vector<std::string> errors;
  const auto subjects = load_subjects(run, d, errors);
  int failed = 0;
  report_failures(errors, d.manifest.subjects, "train", log, failed);
  if (failed) return 1;
  const std::string vid = validation_id.empty() ? subjects.back().id : validation_id;
  std::vector<const SubjectData*> train;
  const SubjectData* val = nullptr;
  for (const auto& s : subjects) {
    if (s.id == vid) {
      val = &s;
    } else {
      train.push_back(&s);
    }
  }
  if (!val) throw DomainError("validation subject " + vid + " is not in the dataset");
  if (train.empty()) throw DomainError("training needs at least two subjects");
  const auto cfg = run.config.learn_config(run.jobs);
  const auto model = train_models(train, val, cfg, derive_seed(cfg.seed, 0x7472616eULL));
  make_dirs(run.out / "models");
  write_model(run.out / "models" / "model", model);
  log << "train: " << train.size() << " subjects, validation " << vid << ", best epochs "
      << model.magnitude_history.best_epoch << " (magnitude) and " << model.onset_history.best_epoch << " (onset)\n";
  return 0;
}

int cmd_loocv(const RunOptions& run, std::ostream& log) {
  echo_config(run, "loocv");
  const auto d = open_dataset(run);
  std::vector<std::string> errors;
  const auto subjects = load_subjects(run, d, errors);
  int failed = 0;
  report_failures(errors, d.manifest.subjects, "loocv", log, failed);
  if (failed) return 1;

  const auto folds = loocv(subjects, run.config.learn_config(run.jobs));
  const auto base = run.out / "loocv";
  for (const char* sub : {"models", "predictions", "baseline"}) make_dirs(base / sub);
  std::vector<SubjectReport> reports, baseline;
  std::string folds_csv = "fold,held_out,validation,magnitude_best_epoch,onset_best_epoch,status\n";
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    if (!f.error.empty()) {
      log << "loocv: " << f.error << '\n';
      ++failed;
      folds_csv += std::to_string(i + 1) + "," + f.held_out + "," + f.validation + ",,,failed\n";
      continue;
    }
    write_model(base / "models" / f.held_out, f.model);
    write_targets(base / "predictions" / (f.held_out + ".bin"), f.prediction);
    write_targets(base / "baseline" / (f.held_out + ".bin"), f.baseline);
    reports.push_back(f.report);
    baseline.push_back(f.baseline_report);
    folds_csv += std::to_string(i + 1) + "," + f.held_out + "," + f.validation + "," +
                 std::to_string(f.model.magnitude_history.best_epoch) + "," +
                 std::to_string(f.model.onset_history.best_epoch) + ",ok\n";
  }
  spill(base / "folds.csv", folds_csv);
  emit_report(reports, base / "report");
  emit_report(baseline, base / "baseline_report");
  const auto m = summary_means(reports);
  const auto b = summary_means(baseline);
  write_means(base / "summary.csv", {{"model", m}, {"mean_baseline", b}});
  log << "loocv: " << reports.size() << " of " << folds.size() << " folds succeeded\n";
  log_means(log, "model        ", m);
  log_means(log, "mean baseline", b);
  return failed ? 1 : 0;
}

int cmd_eval(const RunOptions& run, const fs::path& predictions, bool oracle, std::ostream& log) {
  echo_config(run, "eval");
  const auto d = open_dataset(run);
  std::vector<std::string> errors;
  const auto subjects = load_subjects(run, d, errors);
  int failed = 0;
  report_failures(errors, d.manifest.subjects, "eval", log, failed);
  const fs::path dir = predictions.empty() ? run.out / "loocv" / "predictions" : predictions;
  std::vector<SubjectReport> reports;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (!errors[i].empty()) continue;
    const auto& s = subjects[i];
    try {
      if (oracle) {
        reports.push_back(evaluate(s, s.targets));
      } else {
        const auto path = dir / (s.id + ".bin");
        if (!fs::exists(path)) {
          log << "eval: " << s.id << " has no prediction in " << dir.string() << '\n';
          ++failed;
          continue;
        }
        reports.push_back(evaluate(s, read_targets(path)));
      }
    } catch (const std::exception& ex) {
      log << "eval: " << s.id << " failed: " << ex.what() << '\n';
      ++failed;
    }
  }
  const auto out = run.out / "eval";
  emit_report(reports, out);
  const auto m = summary_means(reports);
  write_means(out / "means.csv", {{oracle ? "targets" : "predictions", m}});
  log << "eval: scored " << reports.size() << " subjects\n";
  log_means(log, oracle ? "targets" : "predictions", m);
  return failed ? 1 : 0;
}

}  // namespace hrtfp::cli
