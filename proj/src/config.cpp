#include "hrtfp/config.hpp"

#include "hrtfp/errors.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace hrtfp {

namespace {

using Entries = std::map<std::string, std::map<std::string, std::string>>;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& v) { return boost::algorithm::join(v, ","); }

std::string join(const std::vector<int>& v) {
  std::vector<std::string> s;
  for (int x : v) s.push_back(std::to_string(x));
  return join(s);
}

class Reader {
 public:
  explicit Reader(const Entries& e) : e_(e) {}

  const std::string& text(const std::string& section, const std::string& key) const {
    return e_.at(section).at(key);
  }
  double real(const std::string& s, const std::string& k) const {
    const auto& t = text(s, k);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0') fail(s, k, "a number");
    return v;
  }
  long long integer(const std::string& s, const std::string& k) const {
    const auto& t = text(s, k);
    long long v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) fail(s, k, "an integer");
    return v;
  }
  std::vector<std::string> list(const std::string& s, const std::string& k) const {
    std::vector<std::string> out;
    boost::algorithm::split(out, text(s, k), boost::algorithm::is_any_of(","));
    for (auto& x : out) boost::algorithm::trim(x);
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
  }
  std::vector<int> int_list(const std::string& s, const std::string& k) const {
    std::vector<int> out;
    for (const auto& x : list(s, k)) {
      int v = 0;
      const auto [p, ec] = std::from_chars(x.data(), x.data() + x.size(), v);
      if (ec != std::errc() || p != x.data() + x.size()) fail(s, k, "a list of integers");
      out.push_back(v);
    }
    return out;
  }

  [[noreturn]] static void fail(const std::string& s, const std::string& k, const std::string& what) {
    throw DomainError("config " + s + "." + k + " must be " + what);
  }

 private:
  const Entries& e_;
};

PipelineConfig from_entries(const Entries& e) {
  const Reader r(e);
  PipelineConfig c;
  c.dataset_root = r.text("dataset", "root");
  c.reference_subject = r.text("dataset", "reference_subject");
  c.anthro_columns = r.list("dataset", "anthro_columns");
  c.synth_subjects = static_cast<int>(r.integer("synth", "subjects"));
  c.synth_seed = static_cast<std::uint64_t>(r.integer("synth", "seed"));
  c.synth_radius_min = r.real("synth", "radius_min");
  c.synth_radius_max = r.real("synth", "radius_max");
  c.synth_directions = static_cast<int>(r.integer("synth", "directions"));
  c.synth_sample_rate = r.real("synth", "sample_rate");
  c.synth_ir_length = static_cast<int>(r.integer("synth", "ir_length"));
  c.synth_mesh_level = static_cast<int>(r.integer("synth", "mesh_level"));
  c.freq_min_hz = r.real("frequency", "min_hz");
  c.freq_max_hz = r.real("frequency", "max_hz");
  c.freq_count = static_cast<int>(r.integer("frequency", "count"));
  c.magnitude_order = static_cast<int>(r.integer("orders", "magnitude"));
  c.onset_order = static_cast<int>(r.integer("orders", "onset"));
  c.sch_order = static_cast<int>(r.integer("orders", "sch"));
  c.crop_angle_deg = r.real("features", "crop_angle_deg");
  c.cap_angle_deg = r.real("features", "cap_angle_deg");
  c.cap_grid_size = static_cast<int>(r.integer("features", "grid_size"));
  c.cap_families = r.text("features", "cap_families");
  c.onset_upsample = static_cast<int>(r.integer("onset", "upsample"));
  c.onset_threshold = r.real("onset", "threshold");
  c.head_radius.width = r.text("head_radius", "width");
  c.head_radius.height = r.text("head_radius", "height");
  c.head_radius.depth = r.text("head_radius", "depth");
  c.head_radius.width_coeff = r.real("head_radius", "width_coeff");
  c.head_radius.height_coeff = r.real("head_radius", "height_coeff");
  c.head_radius.depth_coeff = r.real("head_radius", "depth_coeff");
  c.head_radius.offset = r.real("head_radius", "offset");
  c.epochs = static_cast<int>(r.integer("train", "epochs"));
  c.batch_size = static_cast<int>(r.integer("train", "batch_size"));
  c.learning_rate = r.real("train", "learning_rate");
  c.train_seed = static_cast<std::uint64_t>(r.integer("train", "seed"));
  c.shape.encoder_channels = r.int_list("network", "encoder_channels");
  c.shape.encoder_strided = static_cast<int>(r.integer("network", "encoder_strided"));
  c.shape.decoder_channels = r.int_list("network", "decoder_channels");
  c.shape.kernel = static_cast<int>(r.integer("network", "kernel"));
  c.shape.sequence_length = (c.sch_order + 1) * (c.sch_order + 1);
  c.validate();
  return c;
}

void overlay(Entries& base, const std::string& section, const std::string& key, const std::string& value,
             const std::string& origin) {
  const auto s = base.find(section);
  if (s == base.end() || !s->second.count(key)) {
    throw DomainError(origin + ": unknown config key " + section + "." + key);
  }
  s->second[key] = boost::algorithm::trim_copy(value);
}

}  // namespace

std::string env_override_name(const std::string& section, const std::string& key) {
  return "HRTFP_" + boost::algorithm::to_upper_copy(section) + "_" + boost::algorithm::to_upper_copy(key);
}

Entries PipelineConfig::entries() const {
  Entries e;
  e["dataset"] = {{"root", dataset_root}, {"reference_subject", reference_subject}, {"anthro_columns", join(anthro_columns)}};
  e["synth"] = {{"subjects", std::to_string(synth_subjects)},
                {"seed", std::to_string(synth_seed)},
                {"radius_min", num(synth_radius_min)},
                {"radius_max", num(synth_radius_max)},
                {"directions", std::to_string(synth_directions)},
                {"sample_rate", num(synth_sample_rate)},
                {"ir_length", std::to_string(synth_ir_length)},
                {"mesh_level", std::to_string(synth_mesh_level)}};
  e["frequency"] = {{"min_hz", num(freq_min_hz)}, {"max_hz", num(freq_max_hz)}, {"count", std::to_string(freq_count)}};
  e["orders"] = {{"magnitude", std::to_string(magnitude_order)},
                 {"onset", std::to_string(onset_order)},
                 {"sch", std::to_string(sch_order)}};
  e["features"] = {{"crop_angle_deg", num(crop_angle_deg)},
                   {"cap_angle_deg", num(cap_angle_deg)},
                   {"grid_size", std::to_string(cap_grid_size)},
                   {"cap_families", cap_families}};
  e["onset"] = {{"upsample", std::to_string(onset_upsample)}, {"threshold", num(onset_threshold)}};
  e["head_radius"] = {{"width", head_radius.width},
                      {"height", head_radius.height},
                      {"depth", head_radius.depth},
                      {"width_coeff", num(head_radius.width_coeff)},
                      {"height_coeff", num(head_radius.height_coeff)},
                      {"depth_coeff", num(head_radius.depth_coeff)},
                      {"offset", num(head_radius.offset)}};
  e["train"] = {{"epochs", std::to_string(epochs)},
                {"batch_size", std::to_string(batch_size)},
                {"learning_rate", num(learning_rate)},
                {"seed", std::to_string(train_seed)}};
  e["network"] = {{"encoder_channels", join(shape.encoder_channels)},
                  {"encoder_strided", std::to_string(shape.encoder_strided)},
                  {"decoder_channels", join(shape.decoder_channels)},
                  {"kernel", std::to_string(shape.kernel)}};
  return e;
}

std::string PipelineConfig::to_ini() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, keys] : entries()) {
    out << (first ? "" : "\n") << '[' << section << "]\n";
    first = false;
    for (const auto& [key, value] : keys) out << key << " = " << value << '\n';
  }
  return out.str();
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& file) {
  Entries e = PipelineConfig{}.entries();
  if (!file.empty()) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(file.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& ex) {
      if (!std::filesystem::exists(file)) throw IoError("cannot read config " + file.string());
      throw ParseError(ex.what());
    }
    for (const auto& [section, keys] : tree) {
      if (keys.empty() && !keys.data().empty()) {
        throw ParseError(file.string() + ": key " + section + " outside a section");
      }
      for (const auto& [key, value] : keys) overlay(e, section, key, value.data(), file.string());
    }
  }
  for (auto& [section, keys] : e) {
    for (auto& [key, value] : keys) {
      if (const char* v = std::getenv(env_override_name(section, key).c_str())) {
        value = boost::algorithm::trim_copy(std::string(v));
      }
    }
  }
  return from_entries(e);
}

void PipelineConfig::validate() const {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw DomainError("config " + key + " must be " + what);
  };
  need(anthro_columns.size() == static_cast<std::size_t>(nn::kAnthroCount), "dataset.anthro_columns",
       "a list of " + std::to_string(nn::kAnthroCount) + " column names");
  need(synth_subjects >= 1 && synth_subjects <= 1000, "synth.subjects", "in [1, 1000]");
  need(synth_radius_min > 0.0 && synth_radius_max >= synth_radius_min && synth_radius_max < 0.5,
       "synth.radius_min/radius_max", "0 < min <= max < 0.5 m");
  need(synth_directions >= 16 && synth_directions <= 100000, "synth.directions", "in [16, 100000]");
  need(synth_sample_rate >= 8000.0 && synth_sample_rate <= 384000.0, "synth.sample_rate", "in [8000, 384000] Hz");
  need(synth_ir_length >= 64 && synth_ir_length <= 65536, "synth.ir_length", "in [64, 65536]");
  need(synth_mesh_level >= 1 && synth_mesh_level <= 6, "synth.mesh_level", "in [1, 6]");
  need(freq_min_hz > 0.0 && freq_max_hz > freq_min_hz, "frequency.min_hz/max_hz", "0 < min < max");
  need(freq_count == nn::kFreqCount, "frequency.count", std::to_string(nn::kFreqCount) + " (network input size)");
  need(magnitude_order == 7, "orders.magnitude", "7 (64 network outputs)");
  need(onset_order == 5, "orders.onset", "5 (36 network outputs)");
  need(sch_order >= 1 && sch_order <= 40, "orders.sch", "in [1, 40]");
  need(cap_angle_deg > 0.0 && cap_angle_deg <= 90.0, "features.cap_angle_deg", "in (0, 90]");
  need(crop_angle_deg >= cap_angle_deg && crop_angle_deg < 180.0, "features.crop_angle_deg",
       "at least the cap angle and below 180");
  need(cap_grid_size >= (sch_order + 1) * (sch_order + 1), "features.grid_size", "at least (sch + 1)^2");
  need(cap_families == "neumann" || cap_families == "alternating", "features.cap_families",
       "neumann or alternating");
  need(onset_upsample >= 1 && onset_upsample <= 64, "onset.upsample", "in [1, 64]");
  need(onset_threshold > 0.0 && onset_threshold < 1.0, "onset.threshold", "in (0, 1)");
  need(head_radius.width_coeff >= 0.0 && head_radius.height_coeff >= 0.0 && head_radius.depth_coeff >= 0.0,
       "head_radius.*_coeff", "non-negative");
  need(epochs >= 1, "train.epochs", ">= 1");
  need(batch_size >= 1, "train.batch_size", ">= 1");
  need(learning_rate >= 0.0, "train.learning_rate", ">= 0");
  try {
    nn::NetShape s = shape;
    s.sequence_length = (sch_order + 1) * (sch_order + 1);
    s.validate();
  } catch (const Error& ex) {
    throw DomainError(std::string("config network: ") + ex.what());
  }
}

FeatureOptions PipelineConfig::feature_options() const {
  FeatureOptions o;
  o.crop_half_angle = deg2rad(crop_angle_deg);
  o.cap = CapSpec{deg2rad(cap_angle_deg), sch_order,
                  cap_families == "alternating" ? CapFamilies::kAlternating : CapFamilies::kNeumann};
  o.grid_size = static_cast<std::size_t>(cap_grid_size);
  return o;
}

TargetOptions PipelineConfig::target_options() const {
  TargetOptions o;
  o.freqs = log_frequencies(freq_min_hz, freq_max_hz, freq_count);
  o.magnitude_order = magnitude_order;
  o.onset_order = onset_order;
  o.onset.upsample = onset_upsample;
  o.onset.threshold = onset_threshold;
  return o;
}

LearnConfig PipelineConfig::learn_config(int jobs) const {
  LearnConfig c;
  c.train.epochs = epochs;
  c.train.batch_size = batch_size;
  c.train.learning_rate = learning_rate;
  c.seed = train_seed;
  c.shape = shape;
  c.shape.sequence_length = (sch_order + 1) * (sch_order + 1);
  c.jobs = jobs;
  return c;
}

}  // namespace hrtfp
