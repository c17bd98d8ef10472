#pragma once

#include "coactseg/rng.hpp"
#include "coactseg/tensor.hpp"
#include "coactseg/volume.hpp"

#include <span>
#include <vector>

namespace coact {

/// Cubic crop of every channel of a sample, plus where it came from.
struct Patch {
  Dims3 origin{};
  std::size_t size = 0;
  SampleKind kind = SampleKind::SingleTimePoint;
  Volume3D baseline;
  Volume3D follow_up;
  Volume3D difference;
  LabelVolume label;
};

Patch crop(const Sample& s, Dims3 origin, std::size_t size);

/// Lesion-weighted crop. With foreground in the label, the patch is centred
/// on a uniformly drawn foreground voxel shifted by up to `shift_margin`
/// voxels per axis, then clamped into the volume; otherwise the origin is
/// uniform over all valid positions.
Patch crop_weighted(const Sample& s, std::size_t patch_size, std::size_t shift_margin, Rng& rng);

struct Transform {
  enum class Kind { Identity, Flip, Rotate };
  Kind kind = Kind::Identity;
  int axis = 0;           // flip axis, or rotation axis
  int quarter_turns = 0;  // rotation only, 1..3
};

/// Applies one spatial transform identically to every channel and the label.
Patch apply(const Patch& p, const Transform& t);

/// Identity, a flip about a random axis, or a random multiple of 90 degrees
/// about a random axis, each with probability 1/3.
Transform random_transform(Rng& rng);
Patch augment(const Patch& p, Rng& rng);

template <class Scalar>
Volume<Scalar> flip(const Volume<Scalar>& v, int axis);
/// Rotates a cubic volume by quarter_turns * 90 degrees about `axis`.
template <class Scalar>
Volume<Scalar> rotate90(const Volume<Scalar>& v, int axis, int quarter_turns);

struct Batch {
  /// [N, 3, p, p, p]; channels are baseline, follow-up, difference.
  Tensor input;
  /// [N, 1, p, p, p]
  Tensor label;
  std::vector<SampleKind> kinds;

  std::size_t size() const { return kinds.size(); }
};

Batch stack(std::span<const Patch> patches);

struct SamplerConfig {
  std::size_t patch_size = 24;
  std::size_t shift_margin = 3;
};

/// n_single single time-point patches followed by n_two two time-point
/// patches, each from a uniformly drawn pool member, cropped and augmented.
Batch make_batch(std::span<const Sample> single_pool, std::span<const Sample> two_pool, std::size_t n_single,
                 std::size_t n_two, const SamplerConfig& cfg, Rng& rng);

}  // namespace coact
