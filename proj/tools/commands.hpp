#pragma once

#include "hrtfp/config.hpp"
#include "hrtfp/directions.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hrtfp::cli {

struct RunOptions {
  PipelineConfig config;
  std::filesystem::path out = "hrtfp_out";
  int jobs = 1;
};

/// Where the dataset lives: config dataset.root, else <out>/dataset.
std::filesystem::path dataset_root(const RunOptions& run);

/// manifest.json of a dataset directory; paths are relative to it.
struct SubjectEntry {
  std::string id;
  std::string hrir;  // archive manifest (.json)
  std::string mesh;
  Direction left_ear;
  Direction right_ear;
};
struct DatasetManifest {
  std::string anthro = "anthro.csv";
  std::vector<SubjectEntry> subjects;
};
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Each command echoes its resolved config to <out>/<command>_config.ini and
/// returns the process exit code: 0 only if every subject or fold succeeded.
int cmd_synth(const RunOptions& run, std::ostream& log);
int cmd_prepare(const RunOptions& run, std::ostream& log);
int cmd_train(const RunOptions& run, const std::string& validation_id, std::ostream& log);
int cmd_loocv(const RunOptions& run, std::ostream& log);
/// Scores <predictions>/<id>.bin for every subject that has one; with
/// `oracle` the prepared targets themselves are scored.
int cmd_eval(const RunOptions& run, const std::filesystem::path& predictions, bool oracle, std::ostream& log);

}  // namespace hrtfp::cli
