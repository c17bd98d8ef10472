#include "coactseg/losses.hpp"

#include <stdexcept>

namespace coact {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " does not match " + to_string(b.shape()));
}

PredictionTriple patch_of(const PredictionTriple& out, std::size_t i) {
  return {slice(out.p_al_1, 0, i, i + 1), slice(out.p_al_2, 0, i, i + 1), slice(out.p_nl, 0, i, i + 1)};
}

}  // namespace

Tensor dice_loss(const Tensor& p, const Tensor& y) {
  require_same_shape(p, y, "dice_loss");
  Tensor inter = sum(p * y);
  Tensor denom = add_scalar(sum(p) + sum(y), kDiceSmooth);
  return add_scalar(scale(add_scalar(scale(inter, 2.0), kDiceSmooth) / denom, -1.0), 1.0);
}

Tensor loss_all(const PredictionTriple& out, const Tensor& y_al) {
  return dice_loss(out.p_al_1, y_al) + dice_loss(out.p_al_2, y_al);
}

Tensor loss_new(const PredictionTriple& out, const Tensor& y_nl) { return dice_loss(out.p_nl, y_nl); }

Tensor relation_regularizer(const PredictionTriple& out, SampleKind kind, const Tensor* y_nl) {
  require_same_shape(out.p_al_1, out.p_al_2, "relation_regularizer");
  if (kind == SampleKind::SingleTimePoint) return mean(square(out.p_al_1 - out.p_al_2));
  if (!y_nl || !y_nl->defined())
    throw std::invalid_argument("relation_regularizer: a two time-point patch needs its new-lesion label");
  require_same_shape(out.p_al_1, *y_nl, "relation_regularizer");
  const double support = y_nl->values().sum();
  if (support == 0.0) return Tensor::scalar(0.0);
  Tensor absent = sum(square(out.p_al_1 * *y_nl));
  Tensor present = sum(square(add_scalar(out.p_al_2, -1.0) * *y_nl));
  return scale(absent + present, 1.0 / support);
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
}

LossTerms total_loss(const PredictionTriple& out, const Tensor& labels, std::span<const SampleKind> kinds,
                     const LossWeights& weights, std::size_t iteration) {
  const std::size_t n = kinds.size();
  if (n == 0) throw std::invalid_argument("total_loss: empty batch");
  if (out.p_al_1.dim(0) != n) throw ShapeError("total_loss: batch size does not match the kind list");
  require_same_shape(out.p_al_1, labels, "total_loss");

  std::vector<Tensor> al, nl, rr;
  for (std::size_t i = 0; i < n; ++i) {
    const PredictionTriple p = patch_of(out, i);
    const Tensor y = slice(labels, 0, i, i + 1);
    if (kinds[i] == SampleKind::SingleTimePoint)
      al.push_back(loss_all(p, y));
    else
      nl.push_back(loss_new(p, y));
    rr.push_back(relation_regularizer(p, kinds[i], &y));
  }
  auto group_mean = [](const std::vector<Tensor>& terms) {
    if (terms.empty()) return Tensor::scalar(0.0);
    Tensor acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
    return scale(acc, 1.0 / static_cast<double>(terms.size()));
  };

  LossTerms t;
  const Tensor l_al = group_mean(al), l_nl = group_mean(nl), l_rr = group_mean(rr);
  t.lambda2 = weights.lambda2_at(iteration);
  t.l_al = l_al.item();
  t.l_nl = l_nl.item();
  t.l_rr = l_rr.item();
  t.total = l_al + scale(l_nl, weights.lambda1);
  if (t.lambda2 != 0.0) t.total = t.total + scale(l_rr, t.lambda2);
  return t;
}

}  // namespace coact
