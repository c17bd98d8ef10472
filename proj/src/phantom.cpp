#include "coactseg/phantom.hpp"

#include "coactseg/parallel.hpp"
#include "coactseg/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

namespace coact {

void PhantomConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("phantom config: " + what); };
  for (auto d : dims)
    if (d < 8) fail("dims must be >= 8 voxels per axis");
  for (auto s : spacing)
    if (!(s > 0.0)) fail("spacing must be > 0");
  if (!lesion_count.valid()) fail("lesion_count range is empty");
  if (!new_lesion_count.valid()) fail("new_lesion_count range is empty");
  if (!lesion_radius_vox.valid()) fail("lesion_radius range is empty");
  if (lesion_radius_vox.min < 1.0) fail("lesion radii must be >= 1 voxel");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(lesion_contrast > 0.0)) fail("lesion_contrast must be > 0");
  if (!(lesion_contrast > noise_std)) fail("lesion_contrast must exceed noise_std");
  if (!(background_level > 0.0)) fail("background_level must be > 0");
}

namespace {

enum Stream : std::uint64_t { kNoiseBaseline = 1, kNoiseFollowUp = 2 };

constexpr int kPlacementAttempts = 1000;

LabelVolume brain_ellipsoid(const PhantomConfig& cfg) {
  LabelVolume mask(cfg.dims, cfg.spacing);
  std::array<double, 3> c{}, r{};
  for (int i = 0; i < 3; ++i) {
    c[i] = 0.5 * static_cast<double>(cfg.dims[i] - 1);
    r[i] = 0.45 * static_cast<double>(cfg.dims[i]);
  }
  for (std::size_t z = 0; z < cfg.dims[0]; ++z)
    for (std::size_t y = 0; y < cfg.dims[1]; ++y)
      for (std::size_t x = 0; x < cfg.dims[2]; ++x) {
        const double dz = (z - c[0]) / r[0], dy = (y - c[1]) / r[1], dx = (x - c[2]) / r[2];
        mask(z, y, x) = dz * dz + dy * dy + dx * dx <= 1.0;
      }
  return mask;
}

// Low-frequency texture inside the brain; zero outside.
Volume3D anatomy(const PhantomConfig& cfg, const LabelVolume& brain, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> freq(0.5, 1.5);
  std::array<double, 3> ph{}, fr{};
  for (int i = 0; i < 3; ++i) {
    ph[i] = phase(rng);
    fr[i] = freq(rng);
  }
  Volume3D v = brain.like<double>();
  for (std::size_t z = 0; z < cfg.dims[0]; ++z)
    for (std::size_t y = 0; y < cfg.dims[1]; ++y)
      for (std::size_t x = 0; x < cfg.dims[2]; ++x) {
        if (!brain(z, y, x)) continue;
        const double tz = 2.0 * std::numbers::pi * fr[0] * z / cfg.dims[0] + ph[0];
        const double ty = 2.0 * std::numbers::pi * fr[1] * y / cfg.dims[1] + ph[1];
        const double tx = 2.0 * std::numbers::pi * fr[2] * x / cfg.dims[2] + ph[2];
        v(z, y, x) = cfg.background_level * (1.0 + 0.15 * std::sin(tz) * std::cos(ty) + 0.1 * std::sin(tx + ty));
      }
  return v;
}

struct Voxel {
  long z, y, x;
};

// Adds `count` ellipsoids to `lesions`. A candidate must lie fully inside the
// brain and keep a one-voxel gap (26-neighbourhood) to every voxel of
// `occupied`, so each lesion stays its own connected component.
void place_lesions(const PhantomConfig& cfg, const LabelVolume& brain, std::size_t count, LabelVolume& lesions,
                   LabelVolume& occupied, Rng& rng) {
  std::uniform_real_distribution<double> radius(cfg.lesion_radius_vox.min, cfg.lesion_radius_vox.max);
  const long D = static_cast<long>(cfg.dims[0]), H = static_cast<long>(cfg.dims[1]),
             W = static_cast<long>(cfg.dims[2]);
  std::uniform_int_distribution<long> pz(0, D - 1), py(0, H - 1), px(0, W - 1);
  std::vector<Voxel> support;
  for (std::size_t placed = 0; placed < count; ++placed) {
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      const double rz = radius(rng), ry = radius(rng), rx = radius(rng);
      const Voxel c{pz(rng), py(rng), px(rng)};
      support.clear();
      ok = true;
      const long ez = static_cast<long>(rz), ey = static_cast<long>(ry), ex = static_cast<long>(rx);
      for (long dz = -ez; dz <= ez && ok; ++dz)
        for (long dy = -ey; dy <= ey && ok; ++dy)
          for (long dx = -ex; dx <= ex && ok; ++dx) {
            const double q = (dz / rz) * (dz / rz) + (dy / ry) * (dy / ry) + (dx / rx) * (dx / rx);
            if (q > 1.0) continue;
            const Voxel v{c.z + dz, c.y + dy, c.x + dx};
            if (v.z < 0 || v.y < 0 || v.x < 0 || v.z >= D || v.y >= H || v.x >= W ||
                !brain(v.z, v.y, v.x)) {
              ok = false;
              break;
            }
            for (long nz = std::max(0L, v.z - 1); nz <= std::min(D - 1, v.z + 1) && ok; ++nz)
              for (long ny = std::max(0L, v.y - 1); ny <= std::min(H - 1, v.y + 1) && ok; ++ny)
                for (long nx = std::max(0L, v.x - 1); nx <= std::min(W - 1, v.x + 1); ++nx)
                  if (occupied(nz, ny, nx)) {
                    ok = false;
                    break;
                  }
            support.push_back(v);
          }
    }
    if (!ok)
      throw PhantomError("could not place lesion " + std::to_string(placed + 1) + " of " + std::to_string(count) +
                         " after " + std::to_string(kPlacementAttempts) + " attempts");
    for (const auto& v : support) {
      lesions(v.z, v.y, v.x) = 1;
      occupied(v.z, v.y, v.x) = 1;
    }
  }
}

Volume3D render(const PhantomConfig& cfg, const Volume3D& anat, const LabelVolume& brain,
                const LabelVolume& lesions, std::uint64_t noise_seed) {
  Volume3D v = anat;
  v.data() += cfg.lesion_contrast * lesions.data().cast<double>();
  if (cfg.noise_std > 0.0) {
    Rng rng(noise_seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (std::size_t i = 0; i < v.voxel_count(); ++i)
      if (brain[i]) v[i] += noise(rng);
  }
  return v;
}

std::size_t draw_count(const Range<std::size_t>& r, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(r.min, r.max)(rng);
}

}  // namespace

PhantomCase gen_single(const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const LabelVolume brain = brain_ellipsoid(cfg);
  const Volume3D anat = anatomy(cfg, brain, rng);
  LabelVolume lesions = brain.like<std::uint8_t>();
  LabelVolume occupied = lesions;
  place_lesions(cfg, brain, draw_count(cfg.lesion_count, rng), lesions, occupied, rng);

  PhantomCase c;
  c.seed = cfg.seed;
  c.anatomy = anat;
  c.raw_baseline = render(cfg, anat, brain, lesions, derive_seed(cfg.seed, kNoiseBaseline, 0));
  c.raw_follow_up = c.raw_baseline;
  c.all_lesions_baseline = lesions;
  c.all_lesions_follow_up = lesions;
  c.sample = make_sample_single(c.raw_baseline, lesions, brain);
  return c;
}

PhantomCase gen_two(const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const LabelVolume brain = brain_ellipsoid(cfg);
  const Volume3D anat = anatomy(cfg, brain, rng);
  LabelVolume baseline_lesions = brain.like<std::uint8_t>();
  LabelVolume occupied = baseline_lesions;
  place_lesions(cfg, brain, draw_count(cfg.lesion_count, rng), baseline_lesions, occupied, rng);
  LabelVolume new_lesions = brain.like<std::uint8_t>();
  place_lesions(cfg, brain, draw_count(cfg.new_lesion_count, rng), new_lesions, occupied, rng);

  PhantomCase c;
  c.seed = cfg.seed;
  c.anatomy = anat;
  c.all_lesions_baseline = baseline_lesions;
  c.all_lesions_follow_up = occupied;
  c.raw_baseline = render(cfg, anat, brain, baseline_lesions, derive_seed(cfg.seed, kNoiseBaseline, 0));
  c.raw_follow_up = render(cfg, anat, brain, occupied, derive_seed(cfg.seed, kNoiseFollowUp, 0));
  c.sample = make_sample_two(c.raw_baseline, c.raw_follow_up, new_lesions, brain);
  return c;
}

Manifest gen_dataset(const PhantomConfig& cfg, const DatasetCounts& counts, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  struct Job {
    SampleKind kind;
    Split split;
    std::size_t index;
  };
  std::vector<Job> jobs;
  auto add = [&](SampleKind k, Split s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) jobs.push_back({k, s, i});
  };
  add(SampleKind::SingleTimePoint, Split::Train, counts.single_train);
  add(SampleKind::SingleTimePoint, Split::Val, counts.single_val);
  add(SampleKind::TwoTimePoint, Split::Train, counts.two_train);
  add(SampleKind::TwoTimePoint, Split::Val, counts.two_val);

  Manifest m;
  m.root_seed = cfg.seed;
  m.set_base_dir(out_dir);
  m.records.resize(jobs.size());
  parallel_for(0, jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const auto stream = 16 + 2 * static_cast<std::uint64_t>(job.kind) + static_cast<std::uint64_t>(job.split);
    PhantomConfig c = cfg;
    c.seed = derive_seed(cfg.seed, stream, job.index);
    if (job.kind == SampleKind::TwoTimePoint && job.split == Split::Val) {
      c.new_lesion_count.min = std::max<std::size_t>(1, c.new_lesion_count.min);
      c.new_lesion_count.max = std::max(c.new_lesion_count.min, c.new_lesion_count.max);
    }
    const PhantomCase pc = job.kind == SampleKind::SingleTimePoint ? gen_single(c) : gen_two(c);

    char stem[64];
    std::snprintf(stem, sizeof stem, "%s_%s_%03zu", to_string(job.kind), to_string(job.split), job.index);
    ManifestRecord& r = m.records[j];
    r.name = stem;
    r.kind = job.kind;
    r.split = job.split;
    r.seed = c.seed;
    r.paths = SamplePaths::in({}, stem);
    save_sample(SamplePaths::in(out_dir, stem), pc.sample);
    if (job.kind == SampleKind::SingleTimePoint) {
      r.gt_all_baseline = r.paths.label;
      r.gt_all_follow_up = r.paths.label;
    } else {
      r.gt_all_baseline = std::string(stem) + "_gt_all_baseline.cvol";
      r.gt_all_follow_up = std::string(stem) + "_gt_all_follow_up.cvol";
      save_volume(out_dir / *r.gt_all_baseline, pc.all_lesions_baseline);
      save_volume(out_dir / *r.gt_all_follow_up, pc.all_lesions_follow_up);
    }
  });
  m.save(out_dir / "manifest.tsv");
  return m;
}

}  // namespace coact
