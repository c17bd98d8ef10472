#pragma once

#include "coactseg/manifest.hpp"
#include "coactseg/volume.hpp"

#include <cstdint>
#include <stdexcept>

namespace coact {

template <class T>
struct Range {
  T min{};
  T max{};
  bool valid() const { return min <= max; }
};

struct PhantomConfig {
  Dims3 dims{24, 24, 24};
  Spacing3 spacing{1.0, 1.0, 1.0};
  double background_level = 1.0;
  double noise_std = 0.05;
  Range<std::size_t> lesion_count{2, 4};
  Range<double> lesion_radius_vox{1.5, 3.0};
  Range<std::size_t> new_lesion_count{1, 3};
  double lesion_contrast = 1.0;
  std::uint64_t seed = 1337;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

struct PhantomError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A generated case: the normalized training sample plus the raw scans and the
/// all-lesion ground truth at each time point, which the sample itself does
/// not expose for two time-point cases.
struct PhantomCase {
  Sample sample;
  Volume3D raw_baseline;
  Volume3D raw_follow_up;
  /// Noise-free, lesion-free background shared by both time points.
  Volume3D anatomy;
  LabelVolume all_lesions_baseline;
  LabelVolume all_lesions_follow_up;
  std::uint64_t seed = 0;
};

/// Ellipsoidal brain, smooth background texture with Gaussian noise, and
/// hyperintense ellipsoidal lesions (label = exact lesion support).
PhantomCase gen_single(const PhantomConfig& cfg);

/// Baseline as gen_single; the follow-up reuses the anatomy and baseline
/// lesions, re-draws the noise, and adds new lesions that do not touch any
/// baseline lesion. The exposed label holds the new lesions only.
PhantomCase gen_two(const PhantomConfig& cfg);


struct DatasetCounts {
  std::size_t single_train = 0;
  std::size_t single_val = 0;
  std::size_t two_train = 0;
  std::size_t two_val = 0;
};

/// Writes every case as COACTVOL files under `out_dir` plus `manifest.tsv`.
/// Each case's seed is derived from (cfg.seed, kind, split, index). Two
/// time-point validation cases always carry at least one new lesion.
Manifest gen_dataset(const PhantomConfig& cfg, const DatasetCounts& counts, const std::filesystem::path& out_dir);

}  // namespace coact
