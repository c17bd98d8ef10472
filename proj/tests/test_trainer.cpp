#include "test_util.hpp"

#include "coactseg/phantom.hpp"
#include "coactseg/trainer.hpp"

#include "doctest.h"

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

using namespace coact;

namespace {

TrainConfig tiny_train_config(std::size_t iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.net.levels = 2;
  c.net.base_channels = 2;
  c.net.head_channels = 2;
  c.sampler.patch_size = 8;
  c.sampler.shift_margin = 1;
  c.n_single = 1;
  c.n_two = 1;
  c.weights.switch_iteration = iterations / 2;
  c.log_every = 1;
  return c;
}

struct Pools {
  std::vector<Sample> singles, twos;
};

Pools tiny_pools() {
  PhantomConfig pc;
  pc.dims = {10, 10, 10};
  pc.lesion_count = {1, 2};
  pc.new_lesion_count = {1, 1};
  pc.lesion_radius_vox = {1.0, 1.5};
  Pools p;
  pc.seed = 11;
  p.singles.push_back(gen_single(pc).sample);
  pc.seed = 12;
  p.twos.push_back(gen_two(pc).sample);
  return p;
}

bool same_params(const SegNet& a, const SegNet& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& x = a.parameters()[i].tensor.values();
    const auto& y = b.parameters()[i].tensor.values();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("first Adam step moves by the learning rate against the gradient sign") {
  auto p = Tensor::scalar(2.0, true);
  std::vector<Tensor> params{p};
  std::vector<Array> grads{Array::Constant(1, 1.0)};
  AdamState state;
  adam_step(params, grads, state, {.lr = 0.1});
  // m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps).
  CHECK(p.item() == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(state.step == 1);

  grads[0][0] = -4.0;
  adam_step(params, grads, state, {.lr = 0.1});
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -4.0, v = 0.999 * 0.001 + 0.001 * 16.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  CHECK(p.item() == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-14));
}

TEST_CASE("zero gradients leave parameters untouched") {
  std::mt19937_64 rng(1);
  auto p = coact::testing::random_tensor({3, 4}, rng, true);
  const Array before = p.values();
  std::vector<Tensor> params{p};
  std::vector<Array> grads{Array::Zero(12)};
  AdamState state;
  for (int i = 0; i < 3; ++i) adam_step(params, grads, state, {});
  CHECK((p.values() == before).all());
}

TEST_CASE("Adam rejects mismatched inputs") {
  auto p = Tensor::zeros({2}, true);
  std::vector<Tensor> params{p};
  AdamState state;
  std::vector<Array> none;
  CHECK_THROWS(adam_step(params, none, state, {}));
  std::vector<Array> wrong{Array::Zero(3)};
  CHECK_THROWS(adam_step(params, wrong, state, {}));
}

TEST_CASE("config validation") {
  auto c = tiny_train_config(4);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.iterations = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.adam.lr = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.weights.switch_iteration = 5;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.sampler.patch_size = 7;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.n_single = bad.n_two = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("one iteration is one step and one record") {
  const auto pools = tiny_pools();
  auto c = tiny_train_config(1);
  c.weights.switch_iteration = 1;
  const auto r = train(pools.singles, pools.twos, c);
  REQUIRE(r.log.records.size() == 1);
  CHECK(r.log.records[0].iteration == 0);
  SegNetConfig init_cfg = c.net;
  init_cfg.param_seed = c.seed;
  CHECK_FALSE(same_params(r.net, SegNet(init_cfg)));
}

TEST_CASE("lambda2 trace follows the switch") {
  const auto pools = tiny_pools();
  const auto c = tiny_train_config(6);
  const auto r = train(pools.singles, pools.twos, c);
  REQUIRE(r.log.records.size() == 6);
  for (const auto& rec : r.log.records) {
    CHECK(rec.lambda2 == (rec.iteration < 3 ? 0.0 : 1.0));
    CHECK(std::isfinite(rec.total));
  }
  for (std::size_t i = 1; i < r.log.records.size(); ++i)
    CHECK(r.log.records[i].iteration > r.log.records[i - 1].iteration);
}

TEST_CASE("training is bit-reproducible and seed dependent") {
  const auto pools = tiny_pools();
  auto c = tiny_train_config(4);
  const auto a = train(pools.singles, pools.twos, c);
  const auto b = train(pools.singles, pools.twos, c);
  CHECK(same_params(a.net, b.net));
  for (std::size_t i = 0; i < a.log.records.size(); ++i) CHECK(a.log.records[i].total == b.log.records[i].total);
  c.seed = 99;
  CHECK_FALSE(same_params(a.net, train(pools.singles, pools.twos, c).net));
}

TEST_CASE("empty pools for a requested kind are rejected") {
  const auto pools = tiny_pools();
  const auto c = tiny_train_config(2);
  CHECK_THROWS(train({}, pools.twos, c));
  CHECK_THROWS(train(pools.singles, {}, c));
  auto only_two = c;
  only_two.n_single = 0;
  CHECK_NOTHROW(train({}, pools.twos, only_two));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  auto pools = tiny_pools();
  pools.singles[0].baseline.data().setConstant(std::numeric_limits<double>::quiet_NaN());
  pools.singles[0].follow_up = pools.singles[0].baseline;
  auto c = tiny_train_config(2);
  c.n_two = 0;
  CHECK_THROWS_WITH_AS(train(pools.singles, pools.twos, c), doctest::Contains("non-finite loss at iteration 0"),
                       TrainingError);
}

TEST_CASE("log CSV layout") {
  TrainLog log;
  log.records.push_back({0, 1.5, 1.0, 0.5, 0.25, 0.0, 0.01});
  std::ostringstream os;
  log.write_csv(os);
  CHECK(os.str() == "iteration,total,l_al,l_nl,l_rr,lambda2,seconds\n0,1.5,1,0.5,0.25,0,0.010\n");
}

TEST_CASE("manifest training writes checkpoints and the log; staged switches halfway") {
  coact::testing::TempDir dir;
  PhantomConfig pc;
  pc.dims = {10, 10, 10};
  pc.lesion_count = {1, 2};
  pc.new_lesion_count = {1, 1};
  pc.lesion_radius_vox = {1.0, 1.5};
  const Manifest m = gen_dataset(pc, {1, 0, 1, 0}, dir / "data");

  auto c = tiny_train_config(4);
  c.checkpoint_every = 2;
  c.weights.switch_iteration = 0;
  const auto plain = train(m, c, dir / "run");
  CHECK(std::filesystem::exists(dir / "run" / "final.ckpt"));
  CHECK(std::filesystem::exists(dir / "run" / "checkpoint_000002.ckpt"));
  CHECK(std::filesystem::exists(dir / "run" / "checkpoint_000004.ckpt"));
  CHECK(std::filesystem::exists(dir / "run" / "train_log.csv"));
  CheckpointMeta meta;
  const SegNet back = load_checkpoint(dir / "run" / "final.ckpt", &meta);
  CHECK(meta.iteration == 4);
  CHECK(meta.root_seed == pc.seed);
  CHECK(same_params(back, plain.net));

  const auto staged = train_staged(m, c, dir / "staged");
  for (const auto& rec : staged.log.records) CHECK(rec.lambda2 == (rec.iteration < 2 ? 0.0 : 1.0));
  CHECK_FALSE(same_params(staged.net, plain.net));

  auto explicit_switch = c;
  explicit_switch.weights.switch_iteration = 2;
  CHECK(same_params(train(m, explicit_switch, dir / "explicit").net, staged.net));
}
