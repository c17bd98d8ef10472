#include "coactseg/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace coact {

RunConfig::RunConfig() {
  train.sampler.patch_size = 24;
  train.weights.switch_iteration = train.iterations / 2;
  infer.patch_size = 24;
}

void RunConfig::resolve() {
  phantom.seed = seed;
  train.seed = seed;
  if (staged) train.weights.switch_iteration = train.iterations / 2;
}

void RunConfig::validate() const {
  phantom.validate();
  train.validate();
  infer.validate();
  if (infer.patch_size % train.net.extent_multiple() != 0)
    throw ConfigError("infer.patch_size must be a multiple of " + std::to_string(train.net.extent_multiple()));
  for (auto d : phantom.dims)
    if (d < train.sampler.patch_size || d < infer.patch_size)
      throw ConfigError("phantom.dims must be at least the patch sizes on every axis");
  if (gradcheck.patch == 0 || gradcheck.patch % train.net.extent_multiple() != 0)
    throw ConfigError("gradcheck.patch must be a positive multiple of " +
                      std::to_string(train.net.extent_multiple()));
  if (!(gradcheck.eps > 0.0) || !(gradcheck.tolerance > 0.0))
    throw ConfigError("gradcheck.eps and gradcheck.tolerance must be > 0");
  if (ablate.seeds == 0) throw ConfigError("ablate.seeds must be > 0");
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? run_dir / "final.ckpt" : checkpoint;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + text + "' is not a valid number");
  return v;
}

std::string show(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest text that parses back to the same value.
  for (int p = 1; p <= 17; ++p) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", p, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + s + "' is not a boolean (true/false)");
}

template <class T>
std::string show_scalar(T v) {
  if constexpr (std::is_same_v<T, double>)
    return show(v);
  else
    return std::to_string(v);
}

template <class T>
std::string show_triple(const std::array<T, 3>& a) {
  return show_scalar(a[0]) + "," + show_scalar(a[1]) + "," + show_scalar(a[2]);
}

template <class T>
std::array<T, 3> parse_triple(const std::string& s) {
  std::array<T, 3> out{};
  std::stringstream ss(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw ConfigError("'" + s + "' must have 3 comma-separated values");
    out[i++] = parse_number<T>(trim(part));
  }
  if (i == 1) out[1] = out[2] = out[0];
  else if (i != 3) throw ConfigError("'" + s + "' must have 1 or 3 comma-separated values");
  return out;
}

template <class T>
std::string show_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>)
    return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, double>)
    return show(v);
  else if constexpr (std::is_same_v<T, std::filesystem::path>)
    return v.string();
  else if constexpr (std::is_integral_v<T>)
    return std::to_string(v);
  else
    return show_triple(v);
}

template <class T>
T parse_value(const std::string& s) {
  if constexpr (std::is_same_v<T, bool>)
    return parse_bool(s);
  else if constexpr (std::is_same_v<T, std::filesystem::path>)
    return s;
  else if constexpr (std::is_arithmetic_v<T>)
    return parse_number<T>(s);
  else
    return parse_triple<typename T::value_type>(s);
}

// `field` maps a config (const or not) to the member the key controls.
template <class Field>
void add(std::vector<ConfigKey>& keys, std::string name, std::string help, Field field) {
  using T = std::remove_cvref_t<decltype(field(std::declval<RunConfig&>()))>;
  keys.push_back({std::move(name), std::move(help), [field](const RunConfig& c) { return show_value(field(c)); },
                  [field](RunConfig& c, const std::string& v) { field(c) = parse_value<T>(v); }});
}

#define COACT_FIELD(expr) [](auto& c) -> auto& { return expr; }

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  add(k, "seed", "root seed for phantoms, initialisation and sampling", COACT_FIELD(c.seed));
  add(k, "phantom.dims", "phantom volume size z,y,x in voxels", COACT_FIELD(c.phantom.dims));
  add(k, "phantom.spacing", "voxel spacing z,y,x in mm", COACT_FIELD(c.phantom.spacing));
  add(k, "phantom.background_level", "mean brain intensity", COACT_FIELD(c.phantom.background_level));
  add(k, "phantom.noise_std", "Gaussian noise std inside the brain", COACT_FIELD(c.phantom.noise_std));
  add(k, "phantom.lesion_contrast", "lesion intensity above background", COACT_FIELD(c.phantom.lesion_contrast));
  add(k, "phantom.lesion_count_min", "fewest lesions per scan", COACT_FIELD(c.phantom.lesion_count.min));
  add(k, "phantom.lesion_count_max", "most lesions per scan", COACT_FIELD(c.phantom.lesion_count.max));
  add(k, "phantom.new_lesion_count_min", "fewest new lesions per pair", COACT_FIELD(c.phantom.new_lesion_count.min));
  add(k, "phantom.new_lesion_count_max", "most new lesions per pair", COACT_FIELD(c.phantom.new_lesion_count.max));
  add(k, "phantom.lesion_radius_min", "smallest lesion semi-axis in voxels",
      COACT_FIELD(c.phantom.lesion_radius_vox.min));
  add(k, "phantom.lesion_radius_max", "largest lesion semi-axis in voxels",
      COACT_FIELD(c.phantom.lesion_radius_vox.max));
  add(k, "data.single_train", "single time-point training cases", COACT_FIELD(c.counts.single_train));
  add(k, "data.single_val", "single time-point validation cases", COACT_FIELD(c.counts.single_val));
  add(k, "data.two_train", "two time-point training cases", COACT_FIELD(c.counts.two_train));
  add(k, "data.two_val", "two time-point validation cases", COACT_FIELD(c.counts.two_val));
  add(k, "net.levels", "encoder depth (extent must divide 2^(levels-1))", COACT_FIELD(c.train.net.levels));
  add(k, "net.base_channels", "channels at full resolution", COACT_FIELD(c.train.net.base_channels));
  add(k, "net.head_channels", "hidden channels per prediction head", COACT_FIELD(c.train.net.head_channels));
  add(k, "net.prelu_slope_init", "initial PReLU slope", COACT_FIELD(c.train.net.prelu_slope_init));
  add(k, "train.iterations", "optimizer steps", COACT_FIELD(c.train.iterations));
  add(k, "train.lr", "Adam learning rate", COACT_FIELD(c.train.adam.lr));
  add(k, "train.beta1", "Adam first-moment decay", COACT_FIELD(c.train.adam.beta1));
  add(k, "train.beta2", "Adam second-moment decay", COACT_FIELD(c.train.adam.beta2));
  add(k, "train.adam_eps", "Adam denominator epsilon", COACT_FIELD(c.train.adam.eps));
  add(k, "train.n_single", "single time-point patches per batch", COACT_FIELD(c.train.n_single));
  add(k, "train.n_two", "two time-point patches per batch", COACT_FIELD(c.train.n_two));
  add(k, "train.patch_size", "cubic training patch edge", COACT_FIELD(c.train.sampler.patch_size));
  add(k, "train.shift_margin", "random shift of lesion-centred crops", COACT_FIELD(c.train.sampler.shift_margin));
  add(k, "train.lambda1", "weight of the new-lesion term", COACT_FIELD(c.train.weights.lambda1));
  add(k, "train.lambda2", "weight of the relation regularizer once active", COACT_FIELD(c.train.weights.lambda2));
  add(k, "train.switch_iteration", "first iteration with lambda2 active (ignored when train.staged)",
      COACT_FIELD(c.train.weights.switch_iteration));
  add(k, "train.staged", "activate lambda2 at iterations/2", COACT_FIELD(c.staged));
  add(k, "train.log_every", "iterations between log records", COACT_FIELD(c.train.log_every));
  add(k, "train.checkpoint_every", "iterations between checkpoints (0 = final only)",
      COACT_FIELD(c.train.checkpoint_every));
  add(k, "infer.patch_size", "sliding-window edge", COACT_FIELD(c.infer.patch_size));
  add(k, "infer.stride", "sliding-window step (0 = patch/4)", COACT_FIELD(c.infer.stride));
  add(k, "infer.threshold", "probability threshold", COACT_FIELD(c.infer.threshold));
  add(k, "metrics.f1_min_size", "smallest lesion counted by lesion F1", COACT_FIELD(c.metrics.f1.min_size));
  add(k, "metrics.distances_mm", "surface distances in mm instead of voxels",
      COACT_FIELD(c.metrics.surface.use_spacing));
  add(k, "gradcheck.patch", "cubic patch edge for the gradient check", COACT_FIELD(c.gradcheck.patch));
  add(k, "gradcheck.coords", "probed coordinates per tensor (0 = all)", COACT_FIELD(c.gradcheck.coords));
  add(k, "gradcheck.eps", "central-difference step", COACT_FIELD(c.gradcheck.eps));
  add(k, "gradcheck.tolerance", "largest accepted relative error", COACT_FIELD(c.gradcheck.tolerance));
  add(k, "ablate.seeds", "seeds per ablation row", COACT_FIELD(c.ablate.seeds));
  add(k, "path.data", "dataset directory (holds manifest.tsv)", COACT_FIELD(c.data_dir));
  add(k, "path.run", "training output directory", COACT_FIELD(c.run_dir));
  add(k, "path.out", "prediction and report directory", COACT_FIELD(c.out_dir));
  add(k, "path.checkpoint", "checkpoint to load (empty = <path.run>/final.ckpt)", COACT_FIELD(c.checkpoint));
  return k;
}

#undef COACT_FIELD

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  try {
    k->set(cfg, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void load_config(RunConfig& cfg, std::istream& is, const std::string& origin) {
  std::string line;
  for (std::size_t n = 1; std::getline(is, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  load_config(cfg, is, path.string());
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace coact
