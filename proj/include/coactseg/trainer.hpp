#pragma once

#include "coactseg/losses.hpp"
#include "coactseg/manifest.hpp"
#include "coactseg/network.hpp"
#include "coactseg/sampler.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace coact {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Array> m;
  std::vector<Array> v;
};

/// One bias-corrected Adam update of `params` (leaves) from `grads`. The
/// state is sized on first use.
void adam_step(std::span<Tensor> params, std::span<const Array> grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  std::size_t iterations = 2000;
  AdamConfig adam;
  std::size_t n_single = 2;
  std::size_t n_two = 2;
  SamplerConfig sampler;
  LossWeights weights;
  SegNetConfig net;
  /// Drives parameter initialisation and batch sampling.
  std::uint64_t seed = 1337;
  std::size_t log_every = 10;
  /// 0 disables intermediate checkpoints.
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct TrainRecord {
  std::size_t iteration = 0;
  double total = 0, l_al = 0, l_nl = 0, l_rr = 0, lambda2 = 0;
  double seconds = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  void write_csv(std::ostream& os) const;
  void save_csv(const std::filesystem::path& path) const;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  SegNet net;
  TrainLog log;
};

/// Called after the optimizer step of iteration `it` whenever
/// (it + 1) % checkpoint_every == 0.
using CheckpointHook = std::function<void(std::size_t it, const SegNet& net)>;

/// Runs exactly cfg.iterations optimizer steps on freshly sampled mixed
/// batches. Throws TrainingError on a non-finite loss.
TrainResult train(std::span<const Sample> single_pool, std::span<const Sample> two_pool, const TrainConfig& cfg,
                  const CheckpointHook& on_checkpoint = {});

/// Trains on the manifest's training split and writes into `out_dir`:
/// train_log.csv, final.ckpt and, if enabled, checkpoint_<it>.ckpt.
TrainResult train(const Manifest& manifest, const TrainConfig& cfg, const std::filesystem::path& out_dir);

/// train() with the relation regularizer switched on halfway.
TrainResult train_staged(const Manifest& manifest, TrainConfig cfg, const std::filesystem::path& out_dir);

std::vector<Sample> load_pool(const Manifest& manifest, Split split, SampleKind kind);

}  // namespace coact
