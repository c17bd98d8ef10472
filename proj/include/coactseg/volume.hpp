#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace coact {

/// Voxel counts along (z, y, x).
using Dims3 = std::array<std::size_t, 3>;
/// Physical voxel size in millimetres along (z, y, x).
using Spacing3 = std::array<double, 3>;

/// Dense 3D grid, row-major with x fastest, carrying its physical spacing.
template <class Scalar>
class Volume {
 public:
  using Data = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Volume() = default;
  explicit Volume(Dims3 dims, Spacing3 spacing = {1.0, 1.0, 1.0}, Scalar fill = Scalar(0))
      : dims_(dims), spacing_(spacing) {
    validate_grid();
    data_ = Data::Constant(static_cast<Eigen::Index>(voxel_count()), fill);
  }
  Volume(Dims3 dims, Spacing3 spacing, Data data) : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate_grid();
    if (static_cast<std::size_t>(data_.size()) != voxel_count())
      throw std::invalid_argument("volume data length does not match its dims");
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::size_t voxel_count() const { return dims_[0] * dims_[1] * dims_[2]; }
  bool empty() const { return data_.size() == 0; }

  const Data& data() const { return data_; }
  Data& data() { return data_; }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * dims_[1] + y) * dims_[2] + x;
  }
  Scalar& operator()(std::size_t z, std::size_t y, std::size_t x) {
    return data_[static_cast<Eigen::Index>(index(z, y, x))];
  }
  Scalar operator()(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[static_cast<Eigen::Index>(index(z, y, x))];
  }
  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  template <class Other>
  bool same_grid(const Volume<Other>& o) const {
    return dims_ == o.dims() && spacing_ == o.spacing();
  }

  /// Same grid, independent values.
  template <class Other>
  Volume<Other> like(Other fill = Other(0)) const {
    return Volume<Other>(dims_, spacing_, fill);
  }

  bool operator==(const Volume& o) const {
    return dims_ == o.dims_ && spacing_ == o.spacing_ && (data_ == o.data_).all();
  }

 private:
  void validate_grid() const {
    for (auto d : dims_)
      if (d == 0) throw std::invalid_argument("volume dims must be >= 1");
    for (auto s : spacing_)
      if (!(s > 0.0)) throw std::invalid_argument("volume spacing must be > 0");
  }

  Dims3 dims_{0, 0, 0};
  Spacing3 spacing_{1.0, 1.0, 1.0};
  Data data_;
};

using Volume3D = Volume<double>;
/// Binary mask; values restricted to {0, 1}.
using LabelVolume = Volume<std::uint8_t>;

bool is_binary(const LabelVolume& v);
std::size_t count_foreground(const LabelVolume& v);

enum class SampleKind : std::uint8_t { SingleTimePoint = 0, TwoTimePoint = 1 };

const char* to_string(SampleKind kind);
SampleKind parse_sample_kind(const std::string& s);

/// Training record (baseline, follow-up, difference, label). Single
/// time-point samples repeat the scan and carry an all-zero difference with an
/// all-lesion label; two time-point samples carry a new-lesion label.
struct Sample {
  SampleKind kind = SampleKind::SingleTimePoint;
  Volume3D baseline;
  Volume3D follow_up;
  Volume3D difference;
  LabelVolume label;
  LabelVolume brain_mask;

  const Dims3& dims() const { return baseline.dims(); }
  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// Zero mean, unit population variance over the mask; zero outside it.
Volume3D normalize_zmuv(const Volume3D& v, const LabelVolume& mask);

/// follow_up - baseline, voxelwise.
Volume3D difference_map(const Volume3D& baseline, const Volume3D& follow_up);

/// Normalizes `scan` and pairs it with itself and a zero difference map.
Sample make_sample_single(const Volume3D& scan, const LabelVolume& all_lesions, const LabelVolume& brain_mask);

/// Normalizes each time point independently, then differences them.
Sample make_sample_two(const Volume3D& baseline, const Volume3D& follow_up, const LabelVolume& new_lesions,
                       const LabelVolume& brain_mask);

// COACTVOL on-disk format, little-endian:
//   8-byte magic "COACTVOL", u32 version (1), u8 dtype (0 = f64, 1 = u8 labels),
//   3 x u64 dims, 3 x f64 spacing, then the raw voxel data.
inline constexpr std::uint32_t kVolumeFormatVersion = 1;

template <class Scalar>
void save_volume(const std::filesystem::path& path, const Volume<Scalar>& v);
template <class Scalar>
Volume<Scalar> load_volume(const std::filesystem::path& path);

extern template void save_volume(const std::filesystem::path&, const Volume3D&);
extern template void save_volume(const std::filesystem::path&, const LabelVolume&);
extern template Volume3D load_volume(const std::filesystem::path&);
extern template LabelVolume load_volume(const std::filesystem::path&);

/// File names used for the five members of a saved sample.
struct SamplePaths {
  std::filesystem::path baseline, follow_up, difference, label, brain_mask;
  static SamplePaths in(const std::filesystem::path& dir, const std::string& stem);
};

void save_sample(const SamplePaths& paths, const Sample& s);
Sample load_sample(const SamplePaths& paths, SampleKind kind);

}  // namespace coact
