#pragma once

#include "coactseg/network.hpp"
#include "coactseg/volume.hpp"

#include <filesystem>
#include <vector>

namespace coact {

struct InferenceConfig {
  std::size_t patch_size = 24;
  /// 0 selects patch_size / 4 (at least 1).
  std::size_t stride = 0;
  double threshold = 0.5;

  std::size_t effective_stride() const { return stride ? stride : std::max<std::size_t>(1, patch_size / 4); }
  void validate() const;
};

/// Window origins along one axis: 0, s, 2s, ... with the last one moved to
/// extent - patch so the final window ends at the volume edge.
std::vector<std::size_t> window_origins(std::size_t extent, std::size_t patch, std::size_t stride);

struct HeadMaps {
  /// Mean over covering windows, per head. Not masked.
  Volume3D p_al_1, p_al_2, p_nl;
  /// p > threshold, zero outside the brain mask.
  LabelVolume m_al_1, m_al_2, m_nl;
  /// Number of windows covering each voxel.
  Volume<std::uint32_t> coverage;
};

HeadMaps sliding_window_predict(const SegNet& net, const Sample& sample, const InferenceConfig& cfg);

/// Binarized new-lesion head of a two time-point sample.
LabelVolume predict_new_lesions(const SegNet& net, const Sample& sample, const InferenceConfig& cfg);

/// Writes <stem>_{p,m}_{al1,al2,nl}.cvol into `dir`.
void save_head_maps(const std::filesystem::path& dir, const std::string& stem, const HeadMaps& maps);

}  // namespace coact
