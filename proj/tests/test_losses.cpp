#include "test_util.hpp"

#include "coactseg/losses.hpp"

#include "doctest.h"

#include <algorithm>
#include <numeric>

using namespace coact;
using coact::testing::random_tensor;

namespace {

double dice_oracle(const Array& p, const Array& y) {
  double inter = 0, sp = 0, sy = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    inter += p[i] * y[i];
    sp += p[i];
    sy += y[i];
  }
  return 1.0 - (2.0 * inter + 1e-5) / (sp + sy + 1e-5);
}

Tensor binary_tensor(Shape shape, std::mt19937_64& rng, double p_one = 0.3) {
  std::bernoulli_distribution b(p_one);
  Array v(static_cast<Eigen::Index>(numel(shape)));
  for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor vec(std::initializer_list<double> v, bool grad = false) {
  Array a(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), a.begin());
  return Tensor::from({v.size()}, a, grad);
}

PredictionTriple triple(Tensor a, Tensor b, Tensor c) { return {std::move(a), std::move(b), std::move(c)}; }

}  // namespace

TEST_CASE("dice loss on hand-evaluated cases") {
  CHECK(std::abs(dice_loss(vec({1, 0, 1}), vec({1, 0, 1})).item()) < 1e-12);
  CHECK(dice_loss(vec({0, 0}), vec({0, 0})).item() == 0.0);
  const double eps = 1e-5;
  CHECK(dice_loss(vec({1, 0}), vec({0, 1})).item() == doctest::Approx(1.0 - eps / (2.0 + eps)).epsilon(1e-14));
  CHECK_THROWS_AS(dice_loss(vec({1, 0}), vec({1, 0, 0})), ShapeError);
}

TEST_CASE("dice loss matches the loop oracle and stays in range") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_tensor({1, 1, 3, 4, 5}, rng, false, 0.0, 1.0);
    auto y = binary_tensor({1, 1, 3, 4, 5}, rng);
    const double l = dice_loss(p, y).item();
    CHECK(l == doctest::Approx(dice_oracle(p.values(), y.values())).epsilon(1e-13));
    CHECK(l >= 0.0);
    CHECK(l <= 1.0 + 1e-5);
  }
}

TEST_CASE("dice loss never increases as overlap grows at fixed mass") {
  // Hard predictions of k ones over 6 voxels against a label of 3 ones:
  // shifting one predicted voxel onto the label raises overlap by one.
  const std::size_t n = 6;
  Array y = Array::Zero(n);
  y.head(3).setOnes();
  for (std::size_t k = 1; k <= n; ++k) {
    double prev = 2.0;
    for (std::size_t overlap = (k > 3 ? k - 3 : 0); overlap <= std::min<std::size_t>(k, 3); ++overlap) {
      Array p = Array::Zero(n);
      p.head(overlap).setOnes();
      p.segment(3, k - overlap).setOnes();
      const double l = dice_loss(Tensor::from({n}, p), Tensor::from({n}, y)).item();
      CHECK(l <= prev);
      prev = l;
    }
  }
}

TEST_CASE("all-lesion and new-lesion branches") {
  auto y = vec({1, 1, 0, 0});
  auto empty = vec({0, 0, 0, 0});
  CHECK(loss_all(triple(y, y, empty), y).item() == doctest::Approx(0.0).epsilon(1e-9));
  // One head perfect, the other predicting nothing on a non-empty label.
  const double one = 1.0 - 1e-5 / (2.0 + 1e-5);
  CHECK(loss_all(triple(y, empty, empty), y).item() == doctest::Approx(one).epsilon(1e-12));
  std::mt19937_64 rng(2);
  auto a = random_tensor({4}, rng, false, 0.0, 1.0);
  auto b = random_tensor({4}, rng, false, 0.0, 1.0);
  CHECK(loss_all(triple(a, b, empty), y).item() == loss_all(triple(b, a, empty), y).item());

  CHECK(loss_new(triple(empty, empty, y), y).item() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(loss_new(triple(y, y, empty), empty).item() == 0.0);
  auto p = random_tensor({4}, rng, false, 0.0, 1.0);
  CHECK(loss_new(triple(a, b, p), y).item() == doctest::Approx(dice_oracle(p.values(), y.values())).epsilon(1e-14));
}

TEST_CASE("relation regularizer zero set and hand values") {
  std::mt19937_64 rng(3);
  auto a = random_tensor({2, 3, 4}, rng, false, 0.0, 1.0);
  auto mask = vec({1, 1, 0, 0});
  CHECK(relation_regularizer(triple(a, a.clone(), a), SampleKind::SingleTimePoint).item() == 0.0);

  auto before = vec({0, 0, 0.7, 0.2});
  auto after = vec({1, 1, 0.3, 0.9});
  CHECK(relation_regularizer(triple(before, after, before), SampleKind::TwoTimePoint, &mask).item() == 0.0);

  auto half = vec({0.5, 0.5, 0.5, 0.5});
  // Each masked term is mean over the two mask voxels of 0.25.
  CHECK(relation_regularizer(triple(half, half, half), SampleKind::TwoTimePoint, &mask).item() ==
        doctest::Approx(0.5).epsilon(1e-15));

  auto empty = vec({0, 0, 0, 0});
  CHECK(relation_regularizer(triple(half, vec({0.1, 0.9, 0.3, 0.4}), half), SampleKind::TwoTimePoint, &empty)
            .item() == 0.0);

  CHECK_THROWS_AS(relation_regularizer(triple(half, half, half), SampleKind::TwoTimePoint), std::invalid_argument);

  // Single kind: mean of squared differences.
  auto b = vec({0.2, 0.4, 0.6, 0.8});
  auto c = vec({0.1, 0.4, 0.9, 0.8});
  CHECK(relation_regularizer(triple(b, c, b), SampleKind::SingleTimePoint).item() ==
        doctest::Approx((0.01 + 0.09) / 4.0).epsilon(1e-14));
}

TEST_CASE("relation regularizer is strictly positive off the zero set") {
  auto mask = vec({1, 0, 1});
  auto zero = vec({0, 0, 0});
  auto ones = vec({1, 1, 1});
  CHECK(relation_regularizer(triple(vec({0.1, 0, 0}), ones, zero), SampleKind::TwoTimePoint, &mask).item() > 0.0);
  CHECK(relation_regularizer(triple(zero, vec({0.9, 1, 1}), zero), SampleKind::TwoTimePoint, &mask).item() > 0.0);
  CHECK(relation_regularizer(triple(ones, vec({1, 1, 0.9}), zero), SampleKind::SingleTimePoint).item() > 0.0);
}

TEST_CASE("staged lambda schedule") {
  LossWeights w{.lambda1 = 1.0, .lambda2 = 1.0, .switch_iteration = 10000};
  CHECK(w.lambda2_at(5000) == 0.0);
  CHECK(w.lambda2_at(9999) == 0.0);
  CHECK(w.lambda2_at(10000) == 1.0);
  CHECK(w.lambda2_at(15000) == 1.0);
  w.lambda2 = -1;
  CHECK_THROWS(w.validate());
}

TEST_CASE("total loss combines per-group means") {
  std::mt19937_64 rng(4);
  const Shape s{4, 1, 2, 2, 2};
  PredictionTriple out{random_tensor(s, rng, false, 0.0, 1.0), random_tensor(s, rng, false, 0.0, 1.0),
                       random_tensor(s, rng, false, 0.0, 1.0)};
  auto labels = binary_tensor(s, rng, 0.5);
  const std::vector<SampleKind> kinds{SampleKind::SingleTimePoint, SampleKind::TwoTimePoint,
                                      SampleKind::SingleTimePoint, SampleKind::TwoTimePoint};
  const LossWeights w{.lambda1 = 0.7, .lambda2 = 1.3, .switch_iteration = 10};

  double al = 0, nl = 0, rr = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    auto seg = [&](const Tensor& t) { return Array(t.values().segment(8 * i, 8)); };
    const Array p1 = seg(out.p_al_1), p2 = seg(out.p_al_2), p3 = seg(out.p_nl), y = seg(labels);
    if (kinds[i] == SampleKind::SingleTimePoint) {
      al += dice_oracle(p1, y) + dice_oracle(p2, y);
      rr += (p1 - p2).square().mean();
    } else {
      nl += dice_oracle(p3, y);
      const double m = y.sum();
      if (m > 0) rr += ((p1 * y).square().sum() + ((p2 - 1.0) * y).square().sum()) / m;
    }
  }
  al /= 2, nl /= 2, rr /= 4;

  const auto before = total_loss(out, labels, kinds, w, 9);
  CHECK(before.lambda2 == 0.0);
  CHECK(before.l_al == doctest::Approx(al).epsilon(1e-13));
  CHECK(before.l_nl == doctest::Approx(nl).epsilon(1e-13));
  CHECK(before.l_rr == doctest::Approx(rr).epsilon(1e-13));
  CHECK(before.total.item() == doctest::Approx(al + 0.7 * nl).epsilon(1e-13));
  const auto after = total_loss(out, labels, kinds, w, 10);
  CHECK(after.lambda2 == 1.3);
  CHECK(after.total.item() == doctest::Approx(al + 0.7 * nl + 1.3 * rr).epsilon(1e-13));
}

TEST_CASE("total loss is invariant to patch order") {
  std::mt19937_64 rng(5);
  const Shape s{5, 1, 2, 3, 2};
  PredictionTriple out{random_tensor(s, rng, false, 0.0, 1.0), random_tensor(s, rng, false, 0.0, 1.0),
                       random_tensor(s, rng, false, 0.0, 1.0)};
  auto labels = binary_tensor(s, rng);
  std::vector<SampleKind> kinds{SampleKind::SingleTimePoint, SampleKind::TwoTimePoint, SampleKind::TwoTimePoint,
                                SampleKind::SingleTimePoint, SampleKind::TwoTimePoint};
  const LossWeights w{.switch_iteration = 0};
  const double ref = total_loss(out, labels, kinds, w, 1).total.item();

  std::vector<std::size_t> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    auto permute = [&](const Tensor& t) {
      std::vector<Tensor> parts;
      for (auto i : perm) parts.push_back(slice(t, 0, i, i + 1));
      return concat(parts, 0);
    };
    std::vector<SampleKind> k2;
    for (auto i : perm) k2.push_back(kinds[i]);
    PredictionTriple o2{permute(out.p_al_1), permute(out.p_al_2), permute(out.p_nl)};
    CHECK(total_loss(o2, permute(labels), k2, w, 1).total.item() == doctest::Approx(ref).epsilon(1e-13));
  }
}

TEST_CASE("groups absent from the batch contribute zero") {
  std::mt19937_64 rng(6);
  const Shape s{2, 1, 2, 2, 2};
  PredictionTriple out{random_tensor(s, rng, false, 0.0, 1.0), random_tensor(s, rng, false, 0.0, 1.0),
                       random_tensor(s, rng, false, 0.0, 1.0)};
  auto labels = binary_tensor(s, rng, 0.5);
  const std::vector<SampleKind> singles(2, SampleKind::SingleTimePoint);
  const auto t = total_loss(out, labels, singles, {}, 0);
  CHECK(t.l_nl == 0.0);
  CHECK(t.total.item() == doctest::Approx(t.l_al).epsilon(1e-15));
  CHECK_THROWS(total_loss(out, labels, std::vector<SampleKind>(3, SampleKind::SingleTimePoint), {}, 0));
}

TEST_CASE("all-perfect predictions give a near-zero total") {
  Array y(16);
  for (Eigen::Index i = 0; i < 16; ++i) y[i] = (i % 3 == 0) ? 1.0 : 0.0;
  auto labels = Tensor::from({2, 1, 2, 2, 2}, y);
  // Patch 0 is single (all-lesion heads carry the label), patch 1 is two
  // time-point (new lesions absent at baseline, present at follow-up).
  Array p1 = y, p2 = y, p3 = Array::Zero(16);
  p1.segment(8, 8).setZero();
  p3.segment(8, 8) = y.segment(8, 8);
  const PredictionTriple out{Tensor::from({2, 1, 2, 2, 2}, p1), Tensor::from({2, 1, 2, 2, 2}, p2),
                             Tensor::from({2, 1, 2, 2, 2}, p3)};
  const std::vector<SampleKind> kinds{SampleKind::SingleTimePoint, SampleKind::TwoTimePoint};
  CHECK(total_loss(out, labels, kinds, {.switch_iteration = 0}, 5).total.item() < 1e-5);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(7);
  const Shape s{3, 1, 2, 2, 3};
  std::vector<Tensor> preds{random_tensor(s, rng, true, 0.05, 0.95), random_tensor(s, rng, true, 0.05, 0.95),
                            random_tensor(s, rng, true, 0.05, 0.95)};
  auto labels = binary_tensor(s, rng, 0.4);
  const std::vector<SampleKind> kinds{SampleKind::TwoTimePoint, SampleKind::SingleTimePoint,
                                      SampleKind::TwoTimePoint};
  auto f = [&] {
    return total_loss({preds[0], preds[1], preds[2]}, labels, kinds, {.lambda1 = 0.5, .switch_iteration = 0}, 1)
        .total;
  };
  CHECK(grad_check(f, preds).max_rel_error < 1e-6);

  auto y = binary_tensor({6}, rng);
  CHECK(grad_check([&](const Tensor& p) { return dice_loss(p, y); }, random_tensor({6}, rng, true, 0.1, 0.9),
                   1e-5) < 1e-6);
}
