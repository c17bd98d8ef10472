#pragma once

// VNet-style encoder-decoder over a 3-channel input (baseline, follow-up,
// difference) with three sigmoid heads: two all-lesion heads and a
// new-lesion head that also sees the other two heads' hidden features.

#include "coactseg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace coact {

struct SegNetConfig {
  std::size_t levels = 3;
  std::size_t base_channels = 4;
  std::size_t head_channels = 4;
  double prelu_slope_init = 0.25;
  std::uint64_t param_seed = 1337;

  void validate() const;
  /// Spatial extents must be multiples of this.
  std::size_t extent_multiple() const { return std::size_t{1} << (levels - 1); }
  bool operator==(const SegNetConfig&) const = default;
};

/// Probabilities in (0, 1), each [N, 1, D, H, W]. For a single time-point
/// input these are (p_al^s1, p_al^s2, p_nl^s); for a two time-point input
/// (p_al^t1, p_al^t2, p_nl^t).
struct PredictionTriple {
  Tensor p_al_1;
  Tensor p_al_2;
  Tensor p_nl;
};

struct ForwardOptions {
  /// Replace the all-lesion head features fed to the new-lesion head with
  /// zeros (ablation probe for the cross-head wiring).
  bool sever_cross_head = false;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class SegNet {
 public:
  /// Fan-in scaled uniform initialisation, deterministic in param_seed.
  explicit SegNet(const SegNetConfig& cfg);

  /// Copies are deep: the copy owns independent parameter tensors.
  SegNet(const SegNet& other);
  SegNet& operator=(const SegNet& other);
  SegNet(SegNet&&) noexcept = default;
  SegNet& operator=(SegNet&&) noexcept = default;

  const SegNetConfig& config() const { return cfg_; }

  /// input: [N, 3, D, H, W] with channels (baseline, follow-up, difference).
  PredictionTriple forward(const Tensor& input, const ForwardOptions& opts = {}) const;
  /// Concatenates three [N, 1, D, H, W] inputs and runs forward().
  PredictionTriple forward(const Tensor& baseline, const Tensor& follow_up, const Tensor& difference,
                           const ForwardOptions& opts = {}) const;

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  const Tensor& parameter(const std::string& name) const;
  std::size_t parameter_count() const;
  /// Sum of parameter counts whose name starts with `prefix`.
  std::size_t parameter_count(const std::string& prefix) const;

  void set_requires_grad(bool on);
  void zero_grad();

 private:
  Tensor& add_param(const std::string& name, Shape shape);
  const Tensor& p(const std::string& name) const { return parameter(name); }
  Tensor conv_block(const std::string& name, const Tensor& x, const Tensor& residual) const;

  SegNetConfig cfg_;
  std::vector<NamedTensor> params_;
};

SegNet init_params(const SegNetConfig& cfg);

/// Metadata stored alongside the parameters in a checkpoint.
struct CheckpointMeta {
  std::uint64_t root_seed = 0;
  std::uint64_t iteration = 0;
};

// Checkpoint file, little-endian:
//   8-byte magic "COACTCKP", u32 version (1),
//   u32 levels, u32 base_channels, u32 head_channels, f64 prelu_slope_init,
//   u64 param_seed, u64 root_seed, u64 iteration, u32 tensor count, then per
//   tensor: u32 name length, name bytes, u32 rank, rank x u64 extents, f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const SegNet& net, const CheckpointMeta& meta = {});
SegNet load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace coact
