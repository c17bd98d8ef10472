#include "mask_oracles.hpp"
#include "test_util.hpp"

#include "coactseg/phantom.hpp"

#include "doctest.h"

#include <algorithm>

using namespace coact;

namespace {

PhantomConfig small_config(std::uint64_t seed) {
  PhantomConfig cfg;
  cfg.dims = {20, 20, 20};
  cfg.seed = seed;
  return cfg;
}

bool subset(const LabelVolume& a, const LabelVolume& b) { return ((a.data() != 0) <= (b.data() != 0)).all(); }

}  // namespace

TEST_CASE("config validation") {
  PhantomConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lesion_radius_vox = {0.5, 2.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lesion_count = {3, 2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lesion_contrast = 0.01;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("gen_single produces exactly the requested lesions") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = small_config(seed);
    cfg.lesion_count = {3, 3};
    const auto c = gen_single(cfg);
    CHECK(coact::testing::count_components(c.sample.label, 26) == 3);
    CHECK(c.sample.kind == SampleKind::SingleTimePoint);
    CHECK(subset(c.sample.label, c.sample.brain_mask));
    CHECK_NOTHROW(c.sample.validate());
  }
}

TEST_CASE("noise-free lesions sit exactly contrast above the background") {
  auto cfg = small_config(3);
  cfg.noise_std = 0.0;
  cfg.lesion_contrast = 0.7;
  const auto c = gen_single(cfg);
  std::size_t lesion_voxels = 0;
  for (std::size_t i = 0; i < c.raw_baseline.voxel_count(); ++i) {
    if (c.sample.label[i]) {
      CHECK(c.raw_baseline[i] == c.anatomy[i] + 0.7);
      ++lesion_voxels;
    } else {
      CHECK(c.raw_baseline[i] == c.anatomy[i]);
    }
  }
  CHECK(lesion_voxels > 0);
}

TEST_CASE("generation is deterministic per seed") {
  const auto a = gen_two(small_config(42));
  const auto b = gen_two(small_config(42));
  const auto c = gen_two(small_config(43));
  CHECK(a.raw_baseline == b.raw_baseline);
  CHECK(a.raw_follow_up == b.raw_follow_up);
  CHECK(a.sample.difference == b.sample.difference);
  CHECK(a.sample.label == b.sample.label);
  CHECK_FALSE(a.raw_baseline == c.raw_baseline);
}

TEST_CASE("gen_two label structure") {
  for (std::uint64_t seed = 100; seed < 115; ++seed) {
    const auto c = gen_two(small_config(seed));
    const auto& s = c.sample;
    CHECK(s.kind == SampleKind::TwoTimePoint);
    CHECK_NOTHROW(s.validate());
    // exposed label == follow-up all-lesions minus baseline all-lesions
    const auto expected = (c.all_lesions_follow_up.data() != 0) && (c.all_lesions_baseline.data() == 0);
    CHECK(((s.label.data() != 0) == expected).all());
    CHECK(((s.label.data() != 0) && (c.all_lesions_baseline.data() != 0)).count() == 0);
    CHECK(subset(c.all_lesions_follow_up, s.brain_mask));
    CHECK(subset(c.all_lesions_baseline, c.all_lesions_follow_up));
    const auto n_new = coact::testing::count_components(s.label);
    CHECK(n_new >= 1);
    CHECK(n_new <= 3);
  }
}

TEST_CASE("no new lesions leaves the exposed label empty") {
  auto cfg = small_config(7);
  cfg.new_lesion_count = {0, 0};
  const auto c = gen_two(cfg);
  CHECK(count_foreground(c.sample.label) == 0);
  CHECK(c.all_lesions_baseline == c.all_lesions_follow_up);
}

TEST_CASE("difference map highlights new lesions and stays near zero elsewhere") {
  std::size_t outside = 0, outliers = 0;
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    const auto cfg = small_config(seed);
    const auto c = gen_two(cfg);
    const auto& s = c.sample;
    const auto raw = difference_map(c.raw_baseline, c.raw_follow_up);
    double new_min = 1e9, rest_median_abs = 0.0;
    std::vector<double> rest;
    for (std::size_t i = 0; i < s.difference.voxel_count(); ++i) {
      if (!s.brain_mask[i]) continue;
      if (s.label[i]) {
        CHECK(s.difference[i] >= 0.0);
        CHECK(raw[i] >= 0.0);
        new_min = std::min(new_min, s.difference[i]);
      } else {
        ++outside;
        rest.push_back(std::abs(s.difference[i]));
        if (std::abs(raw[i]) > 5.0 * cfg.noise_std) ++outliers;
      }
    }
    std::nth_element(rest.begin(), rest.begin() + rest.size() / 2, rest.end());
    rest_median_abs = rest[rest.size() / 2];
    CHECK(new_min > 5.0 * rest_median_abs);
  }
  // Unchanged voxels differ only by two independent noise draws (sd
  // sqrt(2) * noise_std), so 5 * noise_std is ~3.5 sd: tail mass ~4e-4.
  CHECK(outside > 0);
  CHECK(static_cast<double>(outliers) / static_cast<double>(outside) < 2e-3);
}

TEST_CASE("placement failure is reported") {
  auto cfg = small_config(1);
  cfg.dims = {8, 8, 8};
  cfg.lesion_count = {40, 40};
  cfg.lesion_radius_vox = {2.5, 3.0};
  CHECK_THROWS_AS(gen_single(cfg), PhantomError);
}

TEST_CASE("gen_dataset writes a reproducible manifest") {
  coact::testing::TempDir a, b;
  auto cfg = small_config(1337);
  cfg.new_lesion_count = {0, 2};
  const DatasetCounts counts{2, 1, 3, 2};
  const auto m = gen_dataset(cfg, counts, a.path());
  CHECK(m.records.size() == 8);
  CHECK(m.count(Split::Train, SampleKind::SingleTimePoint) == 2);
  CHECK(m.count(Split::Val, SampleKind::SingleTimePoint) == 1);
  CHECK(m.count(Split::Train, SampleKind::TwoTimePoint) == 3);
  CHECK(m.count(Split::Val, SampleKind::TwoTimePoint) == 2);

  const auto loaded = Manifest::load(a / "manifest.tsv");
  CHECK(loaded.root_seed == 1337);
  REQUIRE(loaded.records.size() == m.records.size());
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(loaded.records[i].name == m.records[i].name);
    CHECK(loaded.records[i].seed == m.records[i].seed);
    seeds.push_back(m.records[i].seed);
    const auto s = loaded.load_sample(loaded.records[i]);
    CHECK(s.kind == m.records[i].kind);
    const auto truth = loaded.load_hidden_truth(loaded.records[i]);
    REQUIRE(truth.has_value());
    if (s.kind == SampleKind::TwoTimePoint && m.records[i].split == Split::Val)
      CHECK(count_foreground(s.label) > 0);
  }
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());

  gen_dataset(cfg, counts, b.path());
  for (const auto& entry : std::filesystem::directory_iterator(a.path()))
    CHECK(coact::testing::read_bytes(entry.path()) ==
          coact::testing::read_bytes(b.path() / entry.path().filename()));
}

TEST_CASE("gen_dataset with no samples writes an empty manifest") {
  coact::testing::TempDir dir;
  const auto m = gen_dataset(small_config(1), {}, dir.path());
  CHECK(m.records.empty());
  CHECK(Manifest::load(dir / "manifest.tsv").records.empty());
}

TEST_CASE("manifest parsing errors") {
  coact::testing::TempDir dir;
  {
    std::ofstream out(dir / "m.tsv");
    out << "# coactseg manifest v1\nname\tsingle\ttrain\n";
  }
  CHECK_THROWS_AS(Manifest::load(dir / "m.tsv"), std::runtime_error);
  {
    std::ofstream out(dir / "n.tsv");
    out << "a\tsingle\ttrain\t1\tb\tf\td\tl\tm\t-\t-\n";
  }
  CHECK_THROWS_WITH_AS(Manifest::load(dir / "n.tsv"), doctest::Contains("header"), std::runtime_error);
}
