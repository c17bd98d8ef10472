#include "coactseg/experiments.hpp"

#include <chrono>

namespace coact {

NetworkGradcheck network_gradcheck(const SegNetConfig& net_cfg, std::size_t patch, const GradCheckOptions& opts,
                                   std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SegNet net(net_cfg);
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::bernoulli_distribution lesion(0.2);
  const std::size_t v = patch * patch * patch;
  Array input(static_cast<Eigen::Index>(2 * 3 * v)), label(static_cast<Eigen::Index>(2 * v));
  // Patch 0: single time-point (x, x, 0). Patch 1: two time-point (b, f, f - b).
  for (std::size_t i = 0; i < v; ++i) {
    const double x = n01(rng), b = n01(rng), f = n01(rng);
    input[i] = x;
    input[v + i] = x;
    input[2 * v + i] = 0.0;
    input[3 * v + i] = b;
    input[4 * v + i] = f;
    input[5 * v + i] = f - b;
    label[i] = lesion(rng);
    label[v + i] = lesion(rng);
  }
  const Tensor x = Tensor::from({2, 3, patch, patch, patch}, input);
  const Tensor y = Tensor::from({2, 1, patch, patch, patch}, label);
  const std::vector<SampleKind> kinds{SampleKind::SingleTimePoint, SampleKind::TwoTimePoint};
  const LossWeights weights{.lambda1 = 1.0, .lambda2 = 1.0, .switch_iteration = 0};
  auto loss = [&] { return total_loss(net.forward(x), y, kinds, weights, 0).total; };
  auto params = net.parameter_tensors();
  NetworkGradcheck out;
  out.result = grad_check(loss, params, opts);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<AblationArm> ablation_arms() {
  return {
      {"no_rr_two", false, true, false, false},  {"no_rr_single", false, false, true, false},
      {"no_rr_mixed", false, true, true, false}, {"rr_two", true, true, false, false},
      {"rr_single", true, false, true, false},   {"rr_mixed", true, true, true, false},
      {"rr_mixed_staged", true, true, true, true},
  };
}

TrainConfig arm_train_config(const TrainConfig& base, const AblationArm& arm) {
  TrainConfig c = base;
  if (!arm.two_data) c.n_two = 0;
  if (!arm.single_data) c.n_single = 0;
  if (!arm.with_rr) {
    c.weights.lambda2 = 0.0;
    c.weights.switch_iteration = 0;
  } else {
    c.weights.switch_iteration = arm.staged ? c.iterations / 2 : 0;
  }
  return c;
}

ArmOutcome run_arm(const AblationArm& arm, const TrainConfig& base, std::size_t seeds,
                   const std::vector<Sample>& train_single, const std::vector<Sample>& train_two,
                   const Manifest& val_manifest, const InferenceConfig& infer, const MetricOptions& metrics) {
  ArmOutcome out{arm, {}, {}};
  for (std::size_t s = 0; s < seeds; ++s) {
    TrainConfig c = arm_train_config(base, arm);
    c.seed = base.seed + s;
    TrainResult r = train(train_single, train_two, c);
    out.report.append(evaluate_dataset(val_manifest, r.net, infer, metrics));
    out.logs.push_back(std::move(r.log));
  }
  return out;
}

AblationRow to_row(const ArmOutcome& o) {
  AblationRow row{o.arm.with_rr, o.arm.two_data, o.arm.single_data, o.arm.staged, std::nullopt, std::nullopt};
  if (o.arm.two_data) row.new_lesions = o.report.new_lesions();
  if (o.arm.single_data) row.all_lesions = o.report.all_lesions();
  return row;
}

}  // namespace coact
