#pragma once

#include "hrtfp/anthro.hpp"
#include "hrtfp/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hrtfp {

/// Every tunable of the pipeline. Angles are degrees here, radians inside the
/// library.
struct PipelineConfig {
  // [dataset]
  std::string dataset_root;       // empty: <out>/dataset
  std::string reference_subject;  // empty: first subject of the manifest
  std::vector<std::string> anthro_columns = default_anthro_columns();
  // [synth]
  int synth_subjects = 8;
  std::uint64_t synth_seed = 1;
  double synth_radius_min = 0.080;
  double synth_radius_max = 0.095;
  int synth_directions = 440;
  double synth_sample_rate = 44100.0;
  int synth_ir_length = 256;
  int synth_mesh_level = 4;
  // [frequency]
  double freq_min_hz = 170.0;
  double freq_max_hz = 17000.0;
  int freq_count = 41;
  // [orders]
  int magnitude_order = 7;
  int onset_order = 5;
  int sch_order = 20;
  // [features]
  double crop_angle_deg = 30.0;
  double cap_angle_deg = 25.0;
  int cap_grid_size = 9062;
  std::string cap_families = "neumann";
  // [onset]
  int onset_upsample = 10;
  double onset_threshold = 0.1;
  // [head_radius]
  HeadRadiusModel head_radius;
  // [train]
  int epochs = 1000;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  std::uint64_t train_seed = 1;
  // [network]
  nn::NetShape shape;

  /// Defaults, then the file (if given), then HRTFP_<SECTION>_<KEY>
  /// environment variables. Unknown keys and out-of-range values throw
  /// DomainError naming the key.
  static PipelineConfig load(const std::filesystem::path& file = {});
  /// Every key as section -> key -> value text.
  std::map<std::string, std::map<std::string, std::string>> entries() const;
  /// INI text of entries(); loading it reproduces this config exactly.
  std::string to_ini() const;
  void validate() const;

  FeatureOptions feature_options() const;
  TargetOptions target_options() const;
  LearnConfig learn_config(int jobs) const;
};

/// The environment variable that overrides section.key.
std::string env_override_name(const std::string& section, const std::string& key);

}  // namespace hrtfp
