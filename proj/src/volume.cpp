#include "coactseg/volume.hpp"

#include "coactseg/binary_io.hpp"

#include <cmath>
#include <limits>

namespace coact {

bool is_binary(const LabelVolume& v) { return (v.data() <= 1).all(); }

std::size_t count_foreground(const LabelVolume& v) {
  return static_cast<std::size_t>((v.data() != 0).count());
}

const char* to_string(SampleKind kind) {
  return kind == SampleKind::SingleTimePoint ? "single" : "two";
}

SampleKind parse_sample_kind(const std::string& s) {
  if (s == "single") return SampleKind::SingleTimePoint;
  if (s == "two") return SampleKind::TwoTimePoint;
  throw std::invalid_argument("unknown sample kind '" + s + "' (expected single or two)");
}

void Sample::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid sample: " + what); };
  if (baseline.empty()) fail("empty baseline");
  if (!baseline.same_grid(follow_up) || !baseline.same_grid(difference) || !baseline.same_grid(label) ||
      !baseline.same_grid(brain_mask))
    fail("members do not share dims and spacing");
  if (!is_binary(label)) fail("label is not binary");
  if (!is_binary(brain_mask)) fail("brain mask is not binary");
  if (kind == SampleKind::SingleTimePoint) {
    if (!(baseline.data() == follow_up.data()).all()) fail("single time-point baseline differs from follow-up");
    if (!(difference.data() == 0.0).all()) fail("single time-point difference map is not zero");
  }
}

Volume3D normalize_zmuv(const Volume3D& v, const LabelVolume& mask) {
  if (!v.same_grid(mask)) throw std::invalid_argument("normalize_zmuv: mask grid does not match volume");
  const auto inside = (mask.data() != 0);
  const auto n = static_cast<double>(inside.count());
  if (n < 2) throw std::invalid_argument("normalize_zmuv: mask needs at least 2 voxels");
  const double mean = inside.select(v.data(), 0.0).sum() / n;
  const double var = inside.select(v.data() - mean, 0.0).square().sum() / n;
  const double scale = inside.select(v.data().abs(), 0.0).maxCoeff();
  if (!(var > 0.0) || std::sqrt(var) <= 1e-12 * std::max(1.0, scale))
    throw std::invalid_argument("normalize_zmuv: intensities under the mask are constant (zero variance)");
  const double sd = std::sqrt(var);
  return Volume3D(v.dims(), v.spacing(), inside.select((v.data() - mean) / sd, 0.0).eval());
}

Volume3D difference_map(const Volume3D& baseline, const Volume3D& follow_up) {
  if (!baseline.same_grid(follow_up))
    throw std::invalid_argument("difference_map: baseline and follow-up grids differ");
  return Volume3D(baseline.dims(), baseline.spacing(), (follow_up.data() - baseline.data()).eval());
}

Sample make_sample_single(const Volume3D& scan, const LabelVolume& all_lesions, const LabelVolume& brain_mask) {
  if (!scan.same_grid(all_lesions) || !scan.same_grid(brain_mask))
    throw std::invalid_argument("make_sample_single: label or mask grid does not match the scan");
  Sample s;
  s.kind = SampleKind::SingleTimePoint;
  s.baseline = normalize_zmuv(scan, brain_mask);
  s.follow_up = s.baseline;
  s.difference = scan.like<double>();
  s.label = all_lesions;
  s.brain_mask = brain_mask;
  s.validate();
  return s;
}

Sample make_sample_two(const Volume3D& baseline, const Volume3D& follow_up, const LabelVolume& new_lesions,
                       const LabelVolume& brain_mask) {
  if (!baseline.same_grid(follow_up) || !baseline.same_grid(new_lesions) || !baseline.same_grid(brain_mask))
    throw std::invalid_argument("make_sample_two: member grids do not match");
  Sample s;
  s.kind = SampleKind::TwoTimePoint;
  s.baseline = normalize_zmuv(baseline, brain_mask);
  s.follow_up = normalize_zmuv(follow_up, brain_mask);
  s.difference = difference_map(s.baseline, s.follow_up);
  s.label = new_lesions;
  s.brain_mask = brain_mask;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "COACTVOL";

template <class Scalar>
constexpr std::uint8_t dtype_code() {
  if constexpr (std::is_same_v<Scalar, double>)
    return 0;
  else
    return 1;
}

}  // namespace

template <class Scalar>
void save_volume(const std::filesystem::path& path, const Volume<Scalar>& v) {
  ByteWriter w;
  w.text(std::string_view(kMagic, 8));
  w.u32(kVolumeFormatVersion);
  w.u8(dtype_code<Scalar>());
  for (auto d : v.dims()) w.u64(d);
  for (auto s : v.spacing()) w.f64(s);
  if constexpr (std::is_same_v<Scalar, double>) {
    w.f64s(std::span<const double>(v.data().data(), v.voxel_count()));
  } else {
    if (!is_binary(v)) throw std::invalid_argument("save_volume: label volume is not binary");
    w.bytes(std::span<const std::uint8_t>(v.data().data(), v.voxel_count()));
  }
  w.save(path);
}

template <class Scalar>
Volume<Scalar> load_volume(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path);
  if (r.remaining() < 8 || r.text(8) != std::string_view(kMagic, 8)) r.fail("bad magic (not a COACTVOL file)");
  const auto version = r.u32();
  if (version != kVolumeFormatVersion) r.fail("unsupported COACTVOL version " + std::to_string(version));
  const auto dtype = r.u8();
  if (dtype > 1) r.fail("unknown dtype code " + std::to_string(dtype));
  if (dtype != dtype_code<Scalar>())
    r.fail(std::string("expected ") + (dtype_code<Scalar>() == 0 ? "f64 intensities" : "u8 labels") +
           ", file holds " + (dtype == 0 ? "f64 intensities" : "u8 labels"));
  Dims3 dims{};
  std::uint64_t count = 1;
  for (auto& d : dims) {
    const std::uint64_t v = r.u64();
    if (v == 0) r.fail("zero dimension");
    if (count > std::numeric_limits<std::uint64_t>::max() / v) r.fail("dim overflow");
    count *= v;
    d = static_cast<std::size_t>(v);
  }
  Spacing3 spacing{};
  for (auto& s : spacing) {
    s = r.f64();
    if (!(s > 0.0) || !std::isfinite(s)) r.fail("non-positive spacing");
  }
  if (count > r.remaining() / sizeof(Scalar)) {
    if (count > std::numeric_limits<std::uint64_t>::max() / sizeof(Scalar) ||
        count > std::numeric_limits<std::size_t>::max() / 2)
      r.fail("dim overflow");
    r.fail("truncated file (header declares " + std::to_string(count) + " voxels, " +
           std::to_string(r.remaining()) + " data bytes present)");
  }
  typename Volume<Scalar>::Data data(static_cast<Eigen::Index>(count));
  if constexpr (std::is_same_v<Scalar, double>) {
    r.f64s(std::span<double>(data.data(), count));
  } else {
    const auto raw = r.bytes(count);
    std::copy(raw.begin(), raw.end(), data.data());
  }
  if (r.remaining() != 0) r.fail("trailing bytes after voxel data");
  Volume<Scalar> v(dims, spacing, std::move(data));
  if constexpr (!std::is_same_v<Scalar, double>)
    if (!is_binary(v)) r.fail("label volume is not binary");
  return v;
}

template void save_volume(const std::filesystem::path&, const Volume3D&);
template void save_volume(const std::filesystem::path&, const LabelVolume&);
template Volume3D load_volume(const std::filesystem::path&);
template LabelVolume load_volume(const std::filesystem::path&);

SamplePaths SamplePaths::in(const std::filesystem::path& dir, const std::string& stem) {
  return {dir / (stem + "_baseline.cvol"), dir / (stem + "_follow_up.cvol"), dir / (stem + "_difference.cvol"),
          dir / (stem + "_label.cvol"), dir / (stem + "_brain_mask.cvol")};
}

void save_sample(const SamplePaths& paths, const Sample& s) {
  s.validate();
  save_volume(paths.baseline, s.baseline);
  save_volume(paths.follow_up, s.follow_up);
  save_volume(paths.difference, s.difference);
  save_volume(paths.label, s.label);
  save_volume(paths.brain_mask, s.brain_mask);
}

Sample load_sample(const SamplePaths& paths, SampleKind kind) {
  Sample s;
  s.kind = kind;
  s.baseline = load_volume<double>(paths.baseline);
  s.follow_up = load_volume<double>(paths.follow_up);
  s.difference = load_volume<double>(paths.difference);
  s.label = load_volume<std::uint8_t>(paths.label);
  s.brain_mask = load_volume<std::uint8_t>(paths.brain_mask);
  s.validate();
  return s;
}

}  // namespace coact
