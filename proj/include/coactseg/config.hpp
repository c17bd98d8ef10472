#pragma once

// Flat key=value run configuration shared by every subcommand.

#include "coactseg/evaluation.hpp"
#include "coactseg/phantom.hpp"
#include "coactseg/trainer.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace coact {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GradcheckSettings {
  std::size_t patch = 8;
  /// Probed coordinates per parameter tensor; 0 probes all.
  std::size_t coords = 48;
  double eps = 1e-4;
  double tolerance = 1e-4;
};

struct AblateSettings {
  std::size_t seeds = 3;
};

struct RunConfig {
  std::uint64_t seed = 1337;
  PhantomConfig phantom;
  DatasetCounts counts{2, 2, 2, 4};
  TrainConfig train;
  bool staged = true;
  InferenceConfig infer;
  MetricOptions metrics;
  GradcheckSettings gradcheck;
  AblateSettings ablate;
  std::filesystem::path data_dir = "data";
  std::filesystem::path run_dir = "run";
  std::filesystem::path out_dir = "out";
  /// Empty selects <run_dir>/final.ckpt.
  std::filesystem::path checkpoint;

  RunConfig();
  /// Copies the root seed into the sections that consume it and applies the
  /// staged switch; call after all keys are set.
  void resolve();
  void validate() const;
  std::filesystem::path checkpoint_path() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(const std::string& name);

/// Throws ConfigError for unknown keys and malformed values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// Reads `key = value` lines; '#' starts a comment.
void load_config(RunConfig& cfg, std::istream& is, const std::string& origin = "<config>");
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);
/// Every key in registry order, one `key = value` line each.
std::string dump_config(const RunConfig& cfg);

}  // namespace coact
