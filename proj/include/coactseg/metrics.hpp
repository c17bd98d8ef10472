#pragma once

#include "coactseg/volume.hpp"

#include <optional>
#include <vector>

namespace coact {

/// 2|P n G| / (|P| + |G|); 1 when both masks are empty.
double dice(const LabelVolume& pred, const LabelVolume& gt);
/// |P n G| / |P u G|; 1 when both masks are empty.
double jaccard(const LabelVolume& pred, const LabelVolume& gt);

struct LesionInstance {
  std::size_t id = 0;
  /// Linear voxel indices in ascending order.
  std::vector<std::size_t> voxels;
  std::size_t size() const { return voxels.size(); }
};

/// Maximal 26-connected foreground components, ordered by their first voxel
/// in row-major order.
std::vector<LesionInstance> connected_components_26(const LabelVolume& mask);

/// Mask voxels with a 6-neighbour outside the mask or outside the volume.
LabelVolume surface(const LabelVolume& mask);

/// Exact Euclidean distance from every voxel to the nearest nonzero voxel of
/// `sites`, in voxels or (with use_spacing) in millimetres. Infinite when
/// `sites` is empty.
Volume3D distance_to(const LabelVolume& sites, bool use_spacing = false);

struct SurfaceDistanceOptions {
  bool use_spacing = false;
};

/// Max of the two directed nearest-rank 95th percentiles of surface
/// distances. 0 when both masks are empty, nullopt when exactly one is.
std::optional<double> hd95(const LabelVolume& pred, const LabelVolume& gt, const SurfaceDistanceOptions& opts = {});
/// Mean of the surface distances pooled over both directions.
std::optional<double> asd(const LabelVolume& pred, const LabelVolume& gt, const SurfaceDistanceOptions& opts = {});

struct LesionF1Options {
  /// Components with fewer voxels are discarded on both sides.
  std::size_t min_size = 11;
};

struct LesionCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Any-overlap lesion matching after the size filter.
LesionCounts lesion_counts(const LabelVolume& pred, const LabelVolume& gt, const LesionF1Options& opts = {});
/// 2TP / (2TP + FP + FN); nullopt when no lesion survives the filter.
std::optional<double> lesion_f1(const LabelVolume& pred, const LabelVolume& gt, const LesionF1Options& opts = {});

}  // namespace coact
