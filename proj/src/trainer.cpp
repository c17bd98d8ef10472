#include "coactseg/trainer.hpp"

#include "coactseg/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace coact {

void adam_step(std::span<Tensor> params, std::span<const Array> grads, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Array::Zero(static_cast<Eigen::Index>(p.numel())));
      state.v.push_back(Array::Zero(static_cast<Eigen::Index>(p.numel())));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != state.m[i].size()) throw ShapeError("adam_step: gradient size mismatch");
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i].square();
    params[i].mutable_values() -= cfg.lr * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + cfg.eps);
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (iterations == 0) fail("iterations must be > 0");
  if (!(adam.lr > 0.0)) fail("lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    fail("adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) fail("adam eps must be > 0");
  if (n_single + n_two == 0) fail("batch must hold at least one patch");
  if (weights.switch_iteration > iterations) fail("switch_iteration must be <= iterations");
  if (log_every == 0) fail("log_every must be > 0");
  if (sampler.patch_size == 0) fail("patch_size must be > 0");
  if (sampler.patch_size % net.extent_multiple() != 0)
    fail("patch_size must be a multiple of " + std::to_string(net.extent_multiple()));
  weights.validate();
  net.validate();
}

void TrainLog::write_csv(std::ostream& os) const {
  os << "iteration,total,l_al,l_nl,l_rr,lambda2,seconds\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.iteration, r.total, r.l_al,
                  r.l_nl, r.l_rr, r.lambda2, r.seconds);
    os << line;
  }
}

void TrainLog::save_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_csv(os);
}

namespace {
enum Stream : std::uint64_t { kBatchStream = 3 };
}

TrainResult train(std::span<const Sample> single_pool, std::span<const Sample> two_pool, const TrainConfig& cfg,
                  const CheckpointHook& on_checkpoint) {
  cfg.validate();
  if (cfg.n_single > 0 && single_pool.empty()) throw std::invalid_argument("train: no single time-point samples");
  if (cfg.n_two > 0 && two_pool.empty()) throw std::invalid_argument("train: no two time-point samples");

  SegNetConfig net_cfg = cfg.net;
  net_cfg.param_seed = cfg.seed;
  TrainResult result{SegNet(net_cfg), {}};
  SegNet& net = result.net;
  auto params = net.parameter_tensors();
  std::vector<Array> grads(params.size());
  AdamState adam;
  Rng rng(derive_seed(cfg.seed, kBatchStream, 0));
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Batch batch = make_batch(single_pool, two_pool, cfg.n_single, cfg.n_two, cfg.sampler, rng);
    const PredictionTriple out = net.forward(batch.input);
    const LossTerms terms = total_loss(out, batch.label, batch.kinds, cfg.weights, it);
    const double total = terms.total.item();
    if (!std::isfinite(total)) {
      char msg[256];
      std::snprintf(msg, sizeof msg, "non-finite loss at iteration %zu (L_al=%g, L_nl=%g, L_rr=%g, lambda2=%g)", it,
                    terms.l_al, terms.l_nl, terms.l_rr, terms.lambda2);
      throw TrainingError(msg);
    }
    net.zero_grad();
    backward(terms.total);
    for (std::size_t i = 0; i < params.size(); ++i) grads[i] = params[i].grad();
    adam_step(params, grads, adam, cfg.adam);

    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.records.push_back({it, total, terms.l_al, terms.l_nl, terms.l_rr, terms.lambda2, seconds});
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) on_checkpoint(it, net);
  }
  net.zero_grad();
  return result;
}

std::vector<Sample> load_pool(const Manifest& manifest, Split split, SampleKind kind) {
  std::vector<Sample> pool;
  for (const auto* r : manifest.select(split, kind)) pool.push_back(manifest.load_sample(*r));
  return pool;
}

TrainResult train(const Manifest& manifest, const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  const auto singles = cfg.n_single > 0 ? load_pool(manifest, Split::Train, SampleKind::SingleTimePoint)
                                        : std::vector<Sample>{};
  const auto twos =
      cfg.n_two > 0 ? load_pool(manifest, Split::Train, SampleKind::TwoTimePoint) : std::vector<Sample>{};
  std::filesystem::create_directories(out_dir);
  auto hook = [&](std::size_t it, const SegNet& net) {
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_%06zu.ckpt", it + 1);
    save_checkpoint(out_dir / name, net, {manifest.root_seed, it + 1});
  };
  TrainResult r = train(singles, twos, cfg, hook);
  save_checkpoint(out_dir / "final.ckpt", r.net, {manifest.root_seed, cfg.iterations});
  r.log.save_csv(out_dir / "train_log.csv");
  return r;
}

TrainResult train_staged(const Manifest& manifest, TrainConfig cfg, const std::filesystem::path& out_dir) {
  cfg.weights.switch_iteration = cfg.iterations / 2;
  return train(manifest, cfg, out_dir);
}

}  // namespace coact
