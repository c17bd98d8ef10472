#include "coactseg/sampler.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace coact {

namespace {

template <class Scalar>
Volume<Scalar> crop_volume(const Volume<Scalar>& v, Dims3 origin, std::size_t size) {
  Volume<Scalar> out({size, size, size}, v.spacing());
  for (std::size_t z = 0; z < size; ++z)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) out(z, y, x) = v(origin[0] + z, origin[1] + y, origin[2] + x);
  return out;
}

void check_fits(const Sample& s, std::size_t size) {
  if (size == 0) throw std::invalid_argument("patch size must be >= 1");
  for (int a = 0; a < 3; ++a)
    if (size > s.dims()[a])
      throw std::invalid_argument("patch size " + std::to_string(size) + " exceeds volume extent " +
                                  std::to_string(s.dims()[a]) + " on axis " + std::to_string(a));
}

}  // namespace

Patch crop(const Sample& s, Dims3 origin, std::size_t size) {
  check_fits(s, size);
  for (int a = 0; a < 3; ++a)
    if (origin[a] + size > s.dims()[a]) throw std::invalid_argument("patch origin places the crop outside the volume");
  Patch p;
  p.origin = origin;
  p.size = size;
  p.kind = s.kind;
  p.baseline = crop_volume(s.baseline, origin, size);
  p.follow_up = crop_volume(s.follow_up, origin, size);
  p.difference = crop_volume(s.difference, origin, size);
  p.label = crop_volume(s.label, origin, size);
  return p;
}

Patch crop_weighted(const Sample& s, std::size_t patch_size, std::size_t shift_margin, Rng& rng) {
  check_fits(s, patch_size);
  const auto& dims = s.dims();
  Dims3 origin{};
  std::vector<std::size_t> foreground;
  for (std::size_t i = 0; i < s.label.voxel_count(); ++i)
    if (s.label[i]) foreground.push_back(i);
  if (foreground.empty()) {
    for (int a = 0; a < 3; ++a)
      origin[a] = std::uniform_int_distribution<std::size_t>(0, dims[a] - patch_size)(rng);
    return crop(s, origin, patch_size);
  }
  const std::size_t pick = foreground[std::uniform_int_distribution<std::size_t>(0, foreground.size() - 1)(rng)];
  const std::array<long, 3> centre{static_cast<long>(pick / (dims[1] * dims[2])),
                                   static_cast<long>((pick / dims[2]) % dims[1]), static_cast<long>(pick % dims[2])};
  const long m = static_cast<long>(shift_margin);
  std::uniform_int_distribution<long> shift(-m, m);
  for (int a = 0; a < 3; ++a) {
    const long c = centre[a] + shift(rng);
    const long o = c - static_cast<long>(patch_size / 2);
    origin[a] = static_cast<std::size_t>(std::clamp(o, 0L, static_cast<long>(dims[a] - patch_size)));
  }
  return crop(s, origin, patch_size);
}

template <class Scalar>
Volume<Scalar> flip(const Volume<Scalar>& v, int axis) {
  Volume<Scalar> out = v;
  const auto& d = v.dims();
  for (std::size_t z = 0; z < d[0]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[2]; ++x) {
        std::array<std::size_t, 3> src{z, y, x};
        src[axis] = d[axis] - 1 - src[axis];
        out(z, y, x) = v(src[0], src[1], src[2]);
      }
  return out;
}

template <class Scalar>
Volume<Scalar> rotate90(const Volume<Scalar>& v, int axis, int quarter_turns) {
  const auto& d = v.dims();
  if (d[0] != d[1] || d[1] != d[2]) throw std::invalid_argument("rotate90 needs a cubic volume");
  const int turns = ((quarter_turns % 4) + 4) % 4;
  // The rotation acts in the plane of the two other axes (u, w):
  // one quarter turn maps (u, w) -> (w, n - 1 - u).
  const int u = axis == 0 ? 1 : 0;
  const int w = axis == 2 ? 1 : 2;
  const std::size_t n = d[0];
  Volume<Scalar> cur = v;
  for (int t = 0; t < turns; ++t) {
    Volume<Scalar> next = cur;
    for (std::size_t z = 0; z < n; ++z)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          std::array<std::size_t, 3> dst{z, y, x};
          std::array<std::size_t, 3> src = dst;
          src[u] = dst[w];
          src[w] = n - 1 - dst[u];
          next(dst[0], dst[1], dst[2]) = cur(src[0], src[1], src[2]);
        }
    cur = std::move(next);
  }
  return cur;
}

template Volume3D flip(const Volume3D&, int);
template LabelVolume flip(const LabelVolume&, int);
template Volume3D rotate90(const Volume3D&, int, int);
template LabelVolume rotate90(const LabelVolume&, int, int);

Patch apply(const Patch& p, const Transform& t) {
  if (t.axis < 0 || t.axis > 2) throw std::invalid_argument("transform axis must be 0, 1 or 2");
  auto map = [&](const auto& v) {
    using V = std::decay_t<decltype(v)>;
    switch (t.kind) {
      case Transform::Kind::Flip:
        return flip(v, t.axis);
      case Transform::Kind::Rotate:
        return rotate90(v, t.axis, t.quarter_turns);
      default:
        return V(v);
    }
  };
  Patch out = p;
  out.baseline = map(p.baseline);
  out.follow_up = map(p.follow_up);
  out.difference = map(p.difference);
  out.label = map(p.label);
  return out;
}

Transform random_transform(Rng& rng) {
  Transform t;
  const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
  t.kind = static_cast<Transform::Kind>(kind);
  if (t.kind != Transform::Kind::Identity) t.axis = std::uniform_int_distribution<int>(0, 2)(rng);
  if (t.kind == Transform::Kind::Rotate) t.quarter_turns = std::uniform_int_distribution<int>(1, 3)(rng);
  return t;
}

Patch augment(const Patch& p, Rng& rng) { return apply(p, random_transform(rng)); }

Batch stack(std::span<const Patch> patches) {
  if (patches.empty()) throw std::invalid_argument("cannot stack an empty batch");
  const std::size_t size = patches[0].size;
  const std::size_t vox = size * size * size;
  const auto n = patches.size();
  Array input(static_cast<Eigen::Index>(n * 3 * vox));
  Array label(static_cast<Eigen::Index>(n * vox));
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    const Patch& p = patches[i];
    if (p.size != size) throw std::invalid_argument("patches in a batch must share their size");
    const auto v = static_cast<Eigen::Index>(vox);
    input.segment(static_cast<Eigen::Index>((3 * i + 0) * vox), v) = p.baseline.data();
    input.segment(static_cast<Eigen::Index>((3 * i + 1) * vox), v) = p.follow_up.data();
    input.segment(static_cast<Eigen::Index>((3 * i + 2) * vox), v) = p.difference.data();
    label.segment(static_cast<Eigen::Index>(i * vox), v) = p.label.data().cast<double>();
    b.kinds.push_back(p.kind);
  }
  b.input = Tensor::from({n, 3, size, size, size}, std::move(input));
  b.label = Tensor::from({n, 1, size, size, size}, std::move(label));
  return b;
}

Batch make_batch(std::span<const Sample> single_pool, std::span<const Sample> two_pool, std::size_t n_single,
                 std::size_t n_two, const SamplerConfig& cfg, Rng& rng) {
  if (n_single > 0 && single_pool.empty())
    throw std::invalid_argument("batch asks for single time-point patches but the pool is empty");
  if (n_two > 0 && two_pool.empty())
    throw std::invalid_argument("batch asks for two time-point patches but the pool is empty");
  if (n_single + n_two == 0) throw std::invalid_argument("batch must contain at least one patch");
  std::vector<Patch> patches;
  patches.reserve(n_single + n_two);
  auto draw = [&](std::span<const Sample> pool, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto& s = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      patches.push_back(augment(crop_weighted(s, cfg.patch_size, cfg.shift_margin, rng), rng));
    }
  };
  draw(single_pool, n_single);
  draw(two_pool, n_two);
  return stack(patches);
}

}  // namespace coact
