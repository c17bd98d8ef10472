#pragma once

// Building blocks shared by the command-line tool and the acceptance suite.

#include "coactseg/evaluation.hpp"
#include "coactseg/trainer.hpp"

#include <string>
#include <vector>

namespace coact {

struct NetworkGradcheck {
  GradCheckResult result;
  double seconds = 0;
};

/// Finite-difference check of the full staged loss (all three terms active)
/// through the network on a random two-patch batch, one patch per kind.
NetworkGradcheck network_gradcheck(const SegNetConfig& net, std::size_t patch, const GradCheckOptions& opts,
                                   std::uint64_t seed);

/// One training recipe of the regularizer / training-data ablation.
struct AblationArm {
  std::string name;
  bool with_rr = false;
  bool two_data = false;
  bool single_data = false;
  bool staged = false;
};

/// Regularizer off then on, each over two time-point only, single
/// time-point only and mixed data, then the staged mixed recipe.
std::vector<AblationArm> ablation_arms();

/// Batch composition and lambda schedule for `arm`. Each kind keeps the
/// per-batch count of `base`; a kind not in the arm gets zero.
TrainConfig arm_train_config(const TrainConfig& base, const AblationArm& arm);

struct ArmOutcome {
  AblationArm arm;
  MetricsReport report;
  std::vector<TrainLog> logs;
};

/// Trains `arm` once per seed (base.seed, base.seed + 1, ...) on the training
/// pools and pools the validation reports of all seeds.
ArmOutcome run_arm(const AblationArm& arm, const TrainConfig& base, std::size_t seeds,
                   const std::vector<Sample>& train_single, const std::vector<Sample>& train_two,
                   const Manifest& val_manifest, const InferenceConfig& infer, const MetricOptions& metrics);

AblationRow to_row(const ArmOutcome& outcome);

}  // namespace coact
