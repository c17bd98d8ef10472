#pragma once

// Dice supervision for both label kinds, the longitudinal relation
// regularizer, and the staged total loss over a mixed batch.

#include "coactseg/network.hpp"
#include "coactseg/tensor.hpp"
#include "coactseg/volume.hpp"

#include <span>

namespace coact {

inline constexpr double kDiceSmooth = 1e-5;

/// 1 - (2 sum(p y) + eps) / (sum(p) + sum(y) + eps).
Tensor dice_loss(const Tensor& p, const Tensor& y);

/// Single time-point branch: both all-lesion heads against the same label.
Tensor loss_all(const PredictionTriple& out, const Tensor& y_al);
/// Two time-point branch: the new-lesion head against the new-lesion label.
Tensor loss_new(const PredictionTriple& out, const Tensor& y_nl);

/// Single kind: mean (p_al_1 - p_al_2)^2 over all voxels.
/// Two kind: mean p_al_1^2 plus mean (p_al_2 - 1)^2, both over the voxels of
/// y_nl; zero when y_nl is empty. `y_nl` is required for the two kind.
Tensor relation_regularizer(const PredictionTriple& out, SampleKind kind, const Tensor* y_nl = nullptr);

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  /// lambda2 is 0 for iterations before this one.
  std::size_t switch_iteration = 1000;

  void validate() const;
  double lambda2_at(std::size_t iteration) const { return iteration < switch_iteration ? 0.0 : lambda2; }
};

struct LossTerms {
  Tensor total;
  double l_al = 0.0;
  double l_nl = 0.0;
  double l_rr = 0.0;
  double lambda2 = 0.0;
};

/// Batch outputs [N, 1, ...] with per-patch `kinds`. Each term is averaged
/// over its patch group (singles for L_al, twos for L_nl, all for L_rr); a
/// group with no patches contributes 0.
LossTerms total_loss(const PredictionTriple& out, const Tensor& labels, std::span<const SampleKind> kinds,
                     const LossWeights& weights, std::size_t iteration);

}  // namespace coact
