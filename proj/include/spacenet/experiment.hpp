#pragma once

// Experiment configuration, run directories, records, one-factor-at-a-time
// ablations and report bundles.
//
// Config documents are JSON. Every key has a default (see ExperimentConfig);
// a document only needs the keys it changes. Unknown keys and wrongly typed
// values are rejected with the dotted key path.

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spacenet/dataio.hpp"
#include "spacenet/metrics.hpp"
#include "spacenet/network.hpp"
#include "spacenet/plot.hpp"
#include "spacenet/ratemap.hpp"
#include "spacenet/spacemask.hpp"
#include "spacenet/train.hpp"
#include "spacenet/waveattack.hpp"

namespace spacenet {

namespace fs = std::filesystem;

struct DataConfig {
  std::string source = "synthetic";  ///< "synthetic" or a directory holding train/ and test/
  Size size{64, 64};
  int regions = 4;  ///< N bands per direction
  MaskScheme scheme = MaskScheme::xy;
  int train_count = 128;  ///< synthetic only
  int test_count = 64;    ///< synthetic only
  bool augment_rotations = false;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ModelSection {
  Backbone backbone = Backbone::tiny;
  HeadArch head_arch = HeadArch::fcn8_like;
  int base_width = 16;
  int hidden_width = 32;
  std::vector<int> aspp_rates{6, 12, 18, 24};
  InitKind init = InitKind::random;
  std::string weights_path;

  friend bool operator==(const ModelSection&, const ModelSection&) = default;
};

struct ProbeConfig {
  int slit_length = 32;
  int separation = 16;

  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

struct AnalysisConfig {
  std::string layer{kLastHidden};
  std::vector<Reduction> reductions{Reduction::mean};  ///< the first one feeds the aggregate waviness
  double waviness_threshold = 0.1;
  double wave_pattern_threshold = 0.3;  ///< records with waviness above this show a wave pattern
  AccWeighting acc_weighting = AccWeighting::as_printed;
  ProbeConfig probe;

  friend bool operator==(const AnalysisConfig&, const AnalysisConfig&) = default;
};

struct AttackConfig {
  AttackGrid grid;
  double epsilon = 8.0;
  Waveform waveform = Waveform::square;

  friend bool operator==(const AttackConfig& a, const AttackConfig& b) {
    return a.grid.wavelengths == b.grid.wavelengths && a.grid.thetas == b.grid.thetas &&
           a.grid.phase_fractions == b.grid.phase_fractions && a.epsilon == b.epsilon && a.waveform == b.waveform;
  }
};

/// Defaults form the desk-scale profile: 64×64 synthetic skeletons, N = 4,
/// tiny backbone, 30 epochs. full_profile() gives the full-size settings.
struct ExperimentConfig {
  DataConfig data;
  ModelSection model;
  TrainConfig train = desk_train();
  AnalysisConfig analysis;
  AttackConfig attack;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";

  static TrainConfig desk_train() {
    TrainConfig t;
    t.epochs = 30;
    t.grad_clip = 1.0;
    return t;
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// 224×224 inputs, N = 20, VGG16-width backbone with FCN-8 fusion, 80 epochs.
inline ExperimentConfig full_profile() {
  ExperimentConfig c;
  c.data.size = {224, 224};
  c.data.regions = 20;
  c.data.augment_rotations = true;
  c.model.backbone = Backbone::vgg16_like;
  c.model.base_width = 64;
  c.model.hidden_width = 64;
  c.train = TrainConfig{};
  return c;
}

/// Head sizes follow the masks: num_classes = max_class + 1.
inline ModelConfig model_config(const ExperimentConfig& c) {
  ModelConfig m;
  m.backbone = c.model.backbone;
  m.head_arch = c.model.head_arch;
  m.input_size = c.data.size;
  const int max_class = max_class_for(c.data.scheme, c.data.regions);
  m.num_classes_h = m.num_classes_v = max_class + 1;
  m.base_width = c.model.base_width;
  m.hidden_width = c.model.hidden_width;
  m.aspp_rates = c.model.aspp_rates;
  m.init = c.model.init;
  m.weights_path = c.model.weights_path;
  return m;
}

// --- JSON ----------------------------------------------------------------------------

inline nlohmann::json to_json_doc(const ExperimentConfig& c) {
  nlohmann::json reductions = nlohmann::json::array();
  for (auto r : c.analysis.reductions) reductions.push_back(to_string(r));
  return {
      {"data",
       {{"source", c.data.source},
        {"size", {c.data.size.height, c.data.size.width}},
        {"regions", c.data.regions},
        {"scheme", to_string(c.data.scheme)},
        {"train_count", c.data.train_count},
        {"test_count", c.data.test_count},
        {"augment_rotations", c.data.augment_rotations}}},
      {"model",
       {{"backbone", to_string(c.model.backbone)},
        {"head_arch", to_string(c.model.head_arch)},
        {"base_width", c.model.base_width},
        {"hidden_width", c.model.hidden_width},
        {"aspp_rates", c.model.aspp_rates},
        {"init", to_string(c.model.init)},
        {"weights_path", c.model.weights_path}}},
      {"train", c.train},
      {"analysis",
       {{"layer", c.analysis.layer},
        {"reductions", reductions},
        {"waviness_threshold", c.analysis.waviness_threshold},
        {"wave_pattern_threshold", c.analysis.wave_pattern_threshold},
        {"acc_weighting", to_string(c.analysis.acc_weighting)},
        {"probe", {{"slit_length", c.analysis.probe.slit_length}, {"separation", c.analysis.probe.separation}}}}},
      {"attack",
       {{"wavelengths", c.attack.grid.wavelengths},
        {"thetas", c.attack.grid.thetas},
        {"phase_fractions", c.attack.grid.phase_fractions},
        {"epsilon", c.attack.epsilon},
        {"waveform", to_string(c.attack.waveform)}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir}};
}

namespace detail {

inline const char* json_kind(const nlohmann::json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "array";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  return "null";
}

inline bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) {
    if (a.is_number_integer() || a.is_number_unsigned()) return b.is_number_integer() || b.is_number_unsigned();
    return true;
  }
  return std::string(json_kind(a)) == json_kind(b);
}

// Merge `user` into `base` (the fully defaulted document), rejecting keys
// that base lacks and values whose JSON kind differs from the default's.
inline void merge_checked(nlohmann::json& base, const nlohmann::json& user, const std::string& path,
                          const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + ": " + (path.empty() ? "config" : "'" + path + "'") + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(where + ": unknown config key '" + full + "'");
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, full, where);
    } else {
      if (!same_kind(slot, value))
        throw ConfigError(where + ": config key '" + full + "' expects " + json_kind(slot) + ", got " + json_kind(value));
      slot = value;
    }
  }
}

template <typename F>
auto with_key(const std::string& key, const std::string& where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": config key '" + key + "': " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

/// Build a config from a complete document (as produced by to_json_doc).
inline ExperimentConfig from_json_doc(const nlohmann::json& j, const std::string& where = "config") {
  using detail::with_key;
  ExperimentConfig c;
  const auto& d = j.at("data");
  c.data.source = d.at("source").get<std::string>();
  c.data.size = with_key("data.size", where, [&] {
    const auto& s = d.at("size");
    if (!s.is_array() || s.size() != 2) throw ConfigError("expected [height, width]");
    return Size{s.at(0).get<int>(), s.at(1).get<int>()};
  });
  c.data.regions = d.at("regions").get<int>();
  c.data.scheme = with_key("data.scheme", where, [&] { return parse_mask_scheme(d.at("scheme").get<std::string>()); });
  c.data.train_count = d.at("train_count").get<int>();
  c.data.test_count = d.at("test_count").get<int>();
  c.data.augment_rotations = d.at("augment_rotations").get<bool>();

  const auto& m = j.at("model");
  c.model.backbone = with_key("model.backbone", where, [&] { return parse_backbone(m.at("backbone").get<std::string>()); });
  c.model.head_arch = with_key("model.head_arch", where, [&] { return parse_head_arch(m.at("head_arch").get<std::string>()); });
  c.model.base_width = m.at("base_width").get<int>();
  c.model.hidden_width = m.at("hidden_width").get<int>();
  c.model.aspp_rates = with_key("model.aspp_rates", where, [&] { return m.at("aspp_rates").get<std::vector<int>>(); });
  c.model.init = with_key("model.init", where, [&] { return parse_init(m.at("init").get<std::string>()); });
  c.model.weights_path = m.at("weights_path").get<std::string>();

  c.train = with_key("train", where, [&] { return j.at("train").get<TrainConfig>(); });

  const auto& a = j.at("analysis");
  c.analysis.layer = a.at("layer").get<std::string>();
  c.analysis.reductions = with_key("analysis.reductions", where, [&] {
    std::vector<Reduction> out;
    for (const auto& r : a.at("reductions")) out.push_back(parse_reduction(r.get<std::string>()));
    if (out.empty()) throw ConfigError("needs at least one reduction");
    return out;
  });
  c.analysis.waviness_threshold = a.at("waviness_threshold").get<double>();
  c.analysis.wave_pattern_threshold = a.at("wave_pattern_threshold").get<double>();
  c.analysis.acc_weighting =
      with_key("analysis.acc_weighting", where, [&] { return parse_acc_weighting(a.at("acc_weighting").get<std::string>()); });
  c.analysis.probe.slit_length = a.at("probe").at("slit_length").get<int>();
  c.analysis.probe.separation = a.at("probe").at("separation").get<int>();

  const auto& k = j.at("attack");
  c.attack.grid.wavelengths = with_key("attack.wavelengths", where, [&] { return k.at("wavelengths").get<std::vector<double>>(); });
  c.attack.grid.thetas = with_key("attack.thetas", where, [&] { return k.at("thetas").get<std::vector<double>>(); });
  c.attack.grid.phase_fractions =
      with_key("attack.phase_fractions", where, [&] { return k.at("phase_fractions").get<std::vector<double>>(); });
  c.attack.epsilon = k.at("epsilon").get<double>();
  c.attack.waveform = with_key("attack.waveform", where, [&] { return parse_waveform(k.at("waveform").get<std::string>()); });

  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();
  validate(c.train);
  if (c.data.train_count < 1 || c.data.test_count < 1) throw ConfigError(where + ": data counts must be >= 1");
  return c;
}

/// Parse a partial config document over the defaults of `base`.
inline ExperimentConfig parse_config(const nlohmann::json& user, const ExperimentConfig& base = {},
                                     const std::string& where = "config") {
  nlohmann::json doc = to_json_doc(base);
  detail::merge_checked(doc, user, "", where);
  return from_json_doc(doc, where);
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, {}, path.string());
}

inline std::string emit_config(const ExperimentConfig& c) { return to_json_doc(c).dump(2); }

/// Apply a dotted-key override, e.g. ("train.lr", "0.05"). The value is read
/// as JSON when it parses, otherwise as a string.
inline ExperimentConfig apply_override(const ExperimentConfig& c, const std::string& key, const std::string& value) {
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    v = value;
  }
  nlohmann::json patch = nlohmann::json::object();
  nlohmann::json* cur = &patch;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
    if (dot == std::string::npos) {
      (*cur)[part] = v;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
  return parse_config(patch, c, "override --" + key);
}

/// FNV-1a over the canonical config text.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_json_doc(c).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(h & 0xffffffffull));
  return buf;
}

/// UTC timestamp plus short config hash, e.g. 20260114-093012-1a2b3c4d.
inline std::string make_run_id(const ExperimentConfig& c) {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return std::string(buf) + "-" + config_hash(c);
}

// --- data -------------------------------------------------------------------------

struct ExperimentData {
  DatasetSplit train;
  DatasetSplit test;
  MaskPair masks;
};

inline ExperimentData prepare_data(const ExperimentConfig& c) {
  ExperimentData d;
  if (c.data.source == "synthetic") {
    d.train = synthesize_skeletons(c.data.train_count, c.data.size, c.seed * 2 + 1, SplitKind::train);
    d.test = synthesize_skeletons(c.data.test_count, c.data.size, c.seed * 2 + 2, SplitKind::test);
  } else {
    d.train = load_skeleton_dataset(c.data.source, SplitKind::train, c.data.size, c.seed);
    d.test = load_skeleton_dataset(c.data.source, SplitKind::test, c.data.size, c.seed);
  }
  if (c.data.augment_rotations) d.train = augment_rotations(d.train);
  d.masks = build_mask_pair(c.data.size, c.data.regions, c.data.scheme);
  return d;
}

/// Write a split as PNGs (0/255) plus its manifest under dir/<train|test>/.
inline void export_split(const DatasetSplit& split, const fs::path& dir) {
  const fs::path sub = dir / to_string(split.split);
  fs::create_directories(sub);
  DatasetSplit named = split;
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    const auto& s = split.samples[i];
    std::string name = s.source_id;
    if (s.rotation) name += "-rot" + std::to_string(s.rotation);
    name += ".png";
    Grid<std::uint8_t> img(s.pixels.size());
    for (std::size_t k = 0; k < img.count(); ++k) img.values()[k] = s.pixels.values()[k] ? 255 : 0;
    write_gray_png(sub / name, img);
    named.samples[i].source_id = name;
  }
  write_manifest(named, sub / kManifestName);
}

// --- records ------------------------------------------------------------------------

struct ExperimentRecord {
  std::string run_id;
  std::string factor = "baseline";  ///< which axis was varied ("Factors" column)
  std::string variant = "default";  ///< "Types" column
  nlohmann::json config;            ///< full config snapshot
  std::string checkpoint;           ///< checkpoint directory
  double acc_space = 0.0;           ///< test split
  double train_acc_space = 0.0;
  double waviness = 0.0;  ///< mean over last-hidden-layer channel profiles
  bool wave_pattern = false;
  std::map<std::string, std::string> artifacts;  ///< name → path

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

inline nlohmann::json to_json_doc(const ExperimentRecord& r) {
  return {{"run_id", r.run_id},           {"factor", r.factor},       {"variant", r.variant},
          {"config", r.config},           {"checkpoint", r.checkpoint}, {"acc_space", r.acc_space},
          {"train_acc_space", r.train_acc_space}, {"waviness", r.waviness}, {"wave_pattern", r.wave_pattern},
          {"artifacts", r.artifacts}};
}

inline ExperimentRecord record_from_json(const nlohmann::json& j) {
  ExperimentRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.factor = j.at("factor").get<std::string>();
  r.variant = j.at("variant").get<std::string>();
  r.config = j.at("config");
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.acc_space = j.at("acc_space").get<double>();
  r.train_acc_space = j.at("train_acc_space").get<double>();
  r.waviness = j.at("waviness").get<double>();
  r.wave_pattern = j.at("wave_pattern").get<bool>();
  r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  return r;
}

inline constexpr const char* kRecordName = "record.json";

/// Records are written once; an existing record is never overwritten.
inline void write_record(const ExperimentRecord& r, const fs::path& run_dir) {
  const fs::path path = run_dir / kRecordName;
  if (fs::exists(path)) throw IoError("record already exists: " + path.string());
  fs::create_directories(run_dir);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json_doc(r).dump(2) << '\n';
}

/// All record.json files below `root`, sorted by path.
inline std::vector<ExperimentRecord> find_records(const fs::path& root) {
  std::vector<fs::path> paths;
  if (fs::exists(root))
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() == kRecordName) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<ExperimentRecord> out;
  for (const auto& p : paths) {
    std::ifstream in(p);
    try {
      out.push_back(record_from_json(nlohmann::json::parse(in)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(p.string() + ": " + e.what());
    }
  }
  return out;
}

// --- pipeline -----------------------------------------------------------------------

struct AnalysisOutput {
  std::vector<Ratemap> ratemaps;
  AggregateWaviness waviness;
};

/// Ratemaps of the configured layer over the test split and their waviness.
template <typename T>
AnalysisOutput analyse(const Model<T>& model, const ExperimentData& data, const AnalysisConfig& a) {
  AnalysisOutput out;
  out.ratemaps = extract_ratemaps(model, data.test, a.layer);
  out.waviness = aggregate_waviness(out.ratemaps, a.waviness_threshold, a.reductions.front());
  return out;
}

/// Write ratemaps (.npy + heatmaps) and profile plots; returns artifact paths.
inline std::map<std::string, std::string> write_analysis_artifacts(const AnalysisOutput& an, const fs::path& dir) {
  std::map<std::string, std::string> art;
  fs::create_directories(dir);
  const fs::path npy = dir / "ratemaps.npy";
  write_npy(npy, an.ratemaps);
  art["ratemaps"] = npy.string();
  const auto heat = write_heatmaps(dir / "heatmaps", "ratemap", an.ratemaps);
  art["heatmaps"] = (dir / "heatmaps").string();
  fs::create_directories(dir / "profiles");
  nlohmann::json reports = nlohmann::json::array();
  for (std::size_t i = 0; i < an.waviness.reports.size(); ++i) {
    const auto& prof = an.waviness.profiles[i];
    const std::string stem = "profile_" + std::to_string(i / 2) + (i % 2 ? "_v" : "_h");
    plot::profile_plot(prof, an.waviness.reports[i]).save(dir / "profiles" / (stem + ".png"));
    nlohmann::json rj = an.waviness.reports[i];
    rj["origin"] = prof.origin;
    reports.push_back(rj);
  }
  art["profiles"] = (dir / "profiles").string();
  std::ofstream(dir / "waviness.json") << nlohmann::json{{"mean", an.waviness.mean}, {"reports", reports}}.dump(2)
                                       << '\n';
  art["waviness"] = (dir / "waviness.json").string();
  return art;
}

/// Train, evaluate and analyse one configuration inside `run_dir`.
inline ExperimentRecord run_experiment(const ExperimentConfig& c, const fs::path& run_dir,
                                       const std::string& factor = "baseline", const std::string& variant = "default") {
  fs::create_directories(run_dir);
  std::ofstream(run_dir / "config.json") << emit_config(c) << '\n';
  const ExperimentData data = prepare_data(c);
  Model<float> model = build_model<float>(model_config(c), c.seed);
  const Checkpoint ck = train(model, data.train, data.masks, c.train, run_dir / "checkpoint");
  ExperimentRecord r;
  r.run_id = run_dir.filename().string();
  r.factor = factor;
  r.variant = variant;
  r.config = to_json_doc(c);
  r.checkpoint = ck.dir.string();
  r.train_acc_space = evaluate_acc_space(model, data.train, data.masks, c.analysis.acc_weighting);
  r.acc_space = evaluate_acc_space(model, data.test, data.masks, c.analysis.acc_weighting);
  const AnalysisOutput an = analyse(model, data, c.analysis);
  r.waviness = an.waviness.mean;
  r.wave_pattern = r.waviness > c.analysis.wave_pattern_threshold;
  r.artifacts = write_analysis_artifacts(an, run_dir / "analysis");
  r.artifacts["metrics"] = (run_dir / "checkpoint" / "metrics.csv").string();
  write_record(r, run_dir);
  return r;
}

// --- ablation -----------------------------------------------------------------------

struct AblationFactor {
  std::string axis;                   ///< alias or dotted config key
  std::vector<std::string> variants;  ///< empty → the axis's default variants
};

struct AxisInfo {
  std::string key;
  std::vector<std::string> defaults;
};

/// Ablation axes and their default variants.
inline const std::map<std::string, AxisInfo>& ablation_axes() {
  static const std::map<std::string, AxisInfo> axes{
      {"architecture", {"model.head_arch", {"fcn8_like", "dilated"}}},
      {"head_arch", {"model.head_arch", {"fcn8_like", "dilated"}}},
      {"backbone", {"model.backbone", {"vgg16_like", "tiny"}}},
      {"layers", {"model.backbone", {"vgg16_like", "tiny"}}},
      {"init", {"model.init", {"random", "external_weights"}}},
      {"scheme", {"data.scheme", {"xy", "xy_symmetric"}}},
      {"input_shape", {"data.size", {"[224,224]", "[224,160]"}}},
      {"regions", {"data.regions", {}}},
  };
  return axes;
}

inline AxisInfo resolve_axis(const std::string& axis) {
  const auto& axes = ablation_axes();
  if (auto it = axes.find(axis); it != axes.end()) return it->second;
  // A dotted key is accepted if it names a scalar field of the config.
  const nlohmann::json doc = to_json_doc(ExperimentConfig{});
  const nlohmann::json* cur = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = axis.find('.', start);
    const std::string part = axis.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(part)) {
      std::string known;
      for (const auto& [k, v] : axes) known += (known.empty() ? "" : ", ") + k;
      throw ConfigError("unknown ablation axis '" + axis + "' (aliases: " + known + "; or a dotted config key)");
    }
    cur = &(*cur)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (cur->is_object()) throw ConfigError("ablation axis '" + axis + "' names a section, not a field");
  return {axis, {}};
}

/// The configurations of a one-factor-at-a-time ablation, in order.
struct AblationRun {
  std::string factor;
  std::string variant;
  ExperimentConfig config;
};

inline std::vector<AblationRun> plan_ablation(const ExperimentConfig& base, const std::vector<AblationFactor>& factors) {
  if (factors.empty()) return {{"baseline", "default", base}};
  std::vector<AblationRun> runs;
  for (const auto& f : factors) {
    const AxisInfo info = resolve_axis(f.axis);
    const auto& variants = f.variants.empty() ? info.defaults : f.variants;
    if (variants.empty()) throw ConfigError("ablation axis '" + f.axis + "' needs explicit variants");
    for (const auto& v : variants) runs.push_back({f.axis, v, apply_override(base, info.key, v)});
  }
  return runs;
}

/// Run every planned variant in its own subdirectory of `out_dir`.
inline std::vector<ExperimentRecord> run_ablation(const ExperimentConfig& base, const std::vector<AblationFactor>& factors,
                                                  const fs::path& out_dir) {
  std::vector<ExperimentRecord> records;
  int i = 0;
  for (const auto& run : plan_ablation(base, factors)) {
    std::string tag = run.factor + "-" + run.variant;
    for (char& ch : tag)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%02d-", i++);
    spdlog::info("ablation {}={}", run.factor, run.variant);
    records.push_back(run_experiment(run.config, out_dir / (prefix + tag), run.factor, run.variant));
  }
  return records;
}

// --- report -------------------------------------------------------------------------

struct ReportBundle {
  fs::path dir;
  std::vector<fs::path> heatmaps;
  std::vector<fs::path> profile_plots;
  std::vector<fs::path> attack_heatmaps;
  fs::path summary_csv;
  fs::path summary_md;
  std::vector<std::string> missing;  ///< artifacts referenced by records but not found
};

inline std::string format_fixed(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Heatmaps, profile plots and attack maps for each record, plus a summary
/// table (Factors, Types, Acc_space, waviness, wave-pattern).
inline ReportBundle render_report(const std::vector<ExperimentRecord>& records, const fs::path& out) {
  if (records.empty()) throw ConfigError("no records found");
  ReportBundle b;
  b.dir = out;
  fs::create_directories(out);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string tag = std::to_string(i) + "_" + r.run_id;
    auto artifact = [&](const std::string& name) -> std::optional<fs::path> {
      auto it = r.artifacts.find(name);
      if (it == r.artifacts.end()) return std::nullopt;
      if (!fs::exists(it->second)) {
        b.missing.push_back(r.run_id + ": " + name + " (" + it->second + ")");
        return std::nullopt;
      }
      return fs::path(it->second);
    };
    if (auto npy = artifact("ratemaps")) {
      try {
        const auto grids = read_npy(*npy);
        const nlohmann::json cfg = r.config;
        const double T = cfg.contains("analysis") ? cfg["analysis"].value("waviness_threshold", 0.1) : 0.1;
        for (std::size_t c = 0; c < grids.size(); ++c) {
          const fs::path hp = out / (tag + "_ratemap_c" + std::to_string(c) + ".png");
          plot::write_heatmap_png(hp, grids[c], 4);
          b.heatmaps.push_back(hp);
          const Ratemap rm{grids[c], "ratemap", static_cast<int>(c), 0, Normalization::raw};
          const Profile1D prof = profile_from_ratemap(rm, Axis::horizontal, Reduction::mean);
          const fs::path pp = out / (tag + "_profile_c" + std::to_string(c) + "_h.png");
          plot::profile_plot(prof, waviness(prof, T)).save(pp);
          b.profile_plots.push_back(pp);
        }
      } catch (const Error& e) {
        b.missing.push_back(r.run_id + ": ratemaps unreadable (" + e.what() + ")");
      }
    }
    if (auto csv = artifact("attack_csv")) {
      AttackResult ar;
      std::ifstream in(*csv);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        AttackPoint p;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &p.wavelength, &p.theta, &p.phase, &p.score) == 4)
          ar.grid.push_back(p);
      }
      if (!ar.grid.empty()) {
        const fs::path ap = out / (tag + "_attack.png");
        write_attack_heatmap(ap, ar);
        b.attack_heatmaps.push_back(ap);
      }
    }
  }

  b.summary_csv = out / "summary.csv";
  b.summary_md = out / "summary.md";
  std::ofstream csv(b.summary_csv), md(b.summary_md);
  csv << "Factors,Types,Acc_space,waviness,wave-pattern\n";
  md << "| Factors | Types | Acc_space | waviness | wave-pattern |\n|---|---|---|---|---|\n";
  for (const auto& r : records) {
    const std::string acc = format_fixed(r.acc_space), wav = format_fixed(r.waviness);
    csv << r.factor << ',' << r.variant << ',' << acc << ',' << wav << ',' << (r.wave_pattern ? "yes" : "no") << '\n';
    md << "| " << r.factor << " | " << r.variant << " | " << acc << " | " << wav << " | "
       << (r.wave_pattern ? "✓" : "✗") << " |\n";
  }
  if (!b.missing.empty()) {
    md << "\nMissing artifacts:\n\n";
    for (const auto& m : b.missing) md << "- " << m << '\n';
  }
  return b;
}

}  // namespace spacenet
