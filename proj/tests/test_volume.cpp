#include "test_util.hpp"

#include "coactseg/binary_io.hpp"
#include "coactseg/volume.hpp"

#include "doctest.h"

using namespace coact;
using coact::testing::TempDir;

namespace {

Volume3D random_volume(Dims3 dims, std::mt19937_64& rng, Spacing3 spacing = {0.5, 0.75, 0.75}) {
  Volume3D v(dims, spacing);
  std::normal_distribution<double> n(3.0, 2.0);
  for (auto& x : v.data()) x = n(rng);
  return v;
}

LabelVolume full_mask(Dims3 dims, Spacing3 spacing = {0.5, 0.75, 0.75}) {
  return LabelVolume(dims, spacing, 1);
}

}  // namespace

TEST_CASE("volume invariants") {
  CHECK_THROWS_AS(Volume3D({0, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Volume3D({1, 2, 2}, {1.0, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Volume3D({2, 2, 2}, {1, 1, 1}, Volume3D::Data::Zero(7)), std::invalid_argument);
  Volume3D v({2, 3, 4});
  v(1, 2, 3) = 5.0;
  CHECK(v[v.voxel_count() - 1] == 5.0);
  CHECK(v.index(1, 0, 0) == 12);
}

TEST_CASE("normalize_zmuv") {
  SUBCASE("hand-computed population statistics") {
    Volume3D v({1, 1, 3}, {1, 1, 1}, (Volume3D::Data(3) << 1, 2, 3).finished());
    auto n = normalize_zmuv(v, LabelVolume({1, 1, 3}, {1, 1, 1}, 1));
    CHECK(n[0] == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(n[1] == doctest::Approx(0.0));
    CHECK(n[2] == doctest::Approx(1.224744871391589).epsilon(1e-12));
  }
  SUBCASE("masked statistics, outside zeroed, idempotent") {
    std::mt19937_64 rng(7);
    auto v = random_volume({4, 5, 6}, rng);
    LabelVolume mask({4, 5, 6}, v.spacing());
    std::bernoulli_distribution coin(0.6);
    for (auto& m : mask.data()) m = coin(rng);
    auto n = normalize_zmuv(v, mask);
    double s = 0, ss = 0, cnt = 0;
    for (std::size_t i = 0; i < v.voxel_count(); ++i) {
      if (mask[i]) {
        s += n[i];
        ss += n[i] * n[i];
        ++cnt;
      } else {
        CHECK(n[i] == 0.0);
      }
    }
    CHECK(std::abs(s / cnt) < 1e-9);
    CHECK(std::abs(std::sqrt(ss / cnt) - 1.0) < 1e-9);
    auto again = normalize_zmuv(n, mask);
    CHECK((again.data() - n.data()).abs().maxCoeff() < 1e-9);
  }
  SUBCASE("constant intensities are rejected") {
    Volume3D v({2, 2, 2}, {1, 1, 1}, 4.0);
    CHECK_THROWS_AS(normalize_zmuv(v, LabelVolume({2, 2, 2}, {1, 1, 1}, 1)), std::invalid_argument);
    CHECK_THROWS_AS(normalize_zmuv(v, LabelVolume({2, 2, 2})), std::invalid_argument);
  }
}

TEST_CASE("difference_map") {
  std::mt19937_64 rng(8);
  auto a = random_volume({3, 4, 5}, rng);
  auto b = random_volume({3, 4, 5}, rng);
  CHECK((difference_map(a, a).data() == 0.0).all());
  Volume3D zero({2, 2, 2}), one({2, 2, 2}, {1, 1, 1}, 1.0);
  CHECK((difference_map(zero, one).data() == 1.0).all());
  auto d = difference_map(a, b);
  for (std::size_t i = 0; i < a.voxel_count(); ++i) CHECK(d[i] == b[i] - a[i]);
  CHECK_THROWS_AS(difference_map(a, Volume3D({3, 4, 6})), std::invalid_argument);
}

TEST_CASE("sample construction") {
  std::mt19937_64 rng(9);
  const Dims3 dims{6, 6, 6};
  auto mask = full_mask(dims);
  LabelVolume lesions(dims, mask.spacing());
  lesions(2, 2, 2) = 1;

  auto single = make_sample_single(random_volume(dims, rng), lesions, mask);
  CHECK(single.kind == SampleKind::SingleTimePoint);
  CHECK((single.difference.data() == 0.0).all());
  CHECK((single.baseline.data() == single.follow_up.data()).all());

  // A new hyperintense blob on an otherwise identical pair shows up as a
  // positive difference exactly on the blob.
  Volume3D base(dims, mask.spacing());
  for (std::size_t i = 0; i < base.voxel_count(); ++i) base[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  Volume3D follow = base;
  LabelVolume blob(dims, mask.spacing());
  for (std::size_t z = 3; z < 5; ++z)
    for (std::size_t y = 3; y < 5; ++y) {
      follow(z, y, 3) += 2.0;
      blob(z, y, 3) = 1;
    }
  auto two = make_sample_two(base, follow, blob, mask);
  CHECK(two.kind == SampleKind::TwoTimePoint);
  double blob_min = 1e9, rest_max = 0.0;
  for (std::size_t i = 0; i < base.voxel_count(); ++i) {
    if (blob[i])
      blob_min = std::min(blob_min, two.difference[i]);
    else
      rest_max = std::max(rest_max, std::abs(two.difference[i]));
  }
  CHECK(blob_min > 0.0);
  CHECK(blob_min > 5.0 * rest_max);
  CHECK_THROWS_AS(make_sample_two(base, follow, LabelVolume({6, 6, 5}), mask), std::invalid_argument);

  Sample broken = single;
  broken.difference[0] = 1.0;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = single;
  broken.label[0] = 2;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("COACTVOL round trip and byte layout") {
  TempDir tmp;
  std::mt19937_64 rng(10);
  auto v = random_volume({3, 4, 5}, rng);
  save_volume(tmp / "v.cvol", v);
  auto bytes = coact::testing::read_bytes(tmp / "v.cvol");
  REQUIRE(bytes.size() == 8 + 4 + 1 + 24 + 24 + 60 * 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "COACTVOL");
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 0);
  CHECK(bytes[13] == 3);
  auto back = load_volume<double>(tmp / "v.cvol");
  CHECK(back == v);
  save_volume(tmp / "v2.cvol", back);
  CHECK(coact::testing::read_bytes(tmp / "v2.cvol") == bytes);

  LabelVolume l({2, 2, 2}, {0.8, 0.8, 0.8});
  l(1, 0, 1) = 1;
  save_volume(tmp / "l.cvol", l);
  CHECK(load_volume<std::uint8_t>(tmp / "l.cvol") == l);
  CHECK_THROWS_AS(load_volume<double>(tmp / "l.cvol"), FormatError);
}

TEST_CASE("COACTVOL rejects corrupt files") {
  TempDir tmp;
  Volume3D v({2, 2, 2}, {1, 1, 1}, 1.5);
  save_volume(tmp / "v.cvol", v);
  auto bytes = coact::testing::read_bytes(tmp / "v.cvol");

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  coact::testing::write_bytes(tmp / "magic.cvol", bad_magic);
  CHECK_THROWS_WITH_AS(load_volume<double>(tmp / "magic.cvol"), doctest::Contains("bad magic"), FormatError);

  std::vector<char> header(bytes.begin(), bytes.begin() + 61);
  coact::testing::write_bytes(tmp / "header.cvol", header);
  CHECK_THROWS_WITH_AS(load_volume<double>(tmp / "header.cvol"), doctest::Contains("truncated"), FormatError);

  auto huge = bytes;
  for (int i = 13; i < 37; ++i) huge[i] = char(0xff);
  coact::testing::write_bytes(tmp / "huge.cvol", huge);
  CHECK_THROWS_WITH_AS(load_volume<double>(tmp / "huge.cvol"), doctest::Contains("overflow"), FormatError);

  auto version = bytes;
  version[8] = 2;
  coact::testing::write_bytes(tmp / "version.cvol", version);
  CHECK_THROWS_AS(load_volume<double>(tmp / "version.cvol"), FormatError);

  std::vector<char> short_file(bytes.begin(), bytes.begin() + 5);
  coact::testing::write_bytes(tmp / "short.cvol", short_file);
  CHECK_THROWS_AS(load_volume<double>(tmp / "short.cvol"), FormatError);
}

TEST_CASE("sample save and load is bit-exact") {
  TempDir tmp;
  std::mt19937_64 rng(12);
  const Dims3 dims{4, 4, 4};
  LabelVolume lesions(dims, {0.5, 0.75, 0.75});
  lesions(1, 1, 1) = 1;
  auto s = make_sample_two(random_volume(dims, rng), random_volume(dims, rng), lesions, full_mask(dims));
  auto paths = SamplePaths::in(tmp.path(), "case0");
  save_sample(paths, s);
  auto back = load_sample(paths, SampleKind::TwoTimePoint);
  CHECK(back.baseline == s.baseline);
  CHECK(back.follow_up == s.follow_up);
  CHECK(back.difference == s.difference);
  CHECK(back.label == s.label);
  CHECK(back.brain_mask == s.brain_mask);
}
