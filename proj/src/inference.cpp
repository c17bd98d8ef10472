#include "coactseg/inference.hpp"

#include "coactseg/sampler.hpp"

#include <stdexcept>

namespace coact {

void InferenceConfig::validate() const {
  if (patch_size == 0) throw std::invalid_argument("inference patch_size must be > 0");
  const std::size_t s = effective_stride();
  if (s < 1 || s > patch_size) throw std::invalid_argument("inference stride must lie in [1, patch_size]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
}

std::vector<std::size_t> window_origins(std::size_t extent, std::size_t patch, std::size_t stride) {
  if (extent < patch)
    throw std::invalid_argument("volume extent " + std::to_string(extent) + " is smaller than the patch size " +
                                std::to_string(patch));
  std::vector<std::size_t> o;
  for (std::size_t x = 0; x + patch < extent; x += stride) o.push_back(x);
  o.push_back(extent - patch);
  return o;
}

HeadMaps sliding_window_predict(const SegNet& net, const Sample& sample, const InferenceConfig& cfg) {
  cfg.validate();
  sample.validate();
  const auto& dims = sample.dims();
  const std::size_t p = cfg.patch_size, s = cfg.effective_stride();
  const auto oz = window_origins(dims[0], p, s), oy = window_origins(dims[1], p, s),
             ox = window_origins(dims[2], p, s);

  SegNet frozen = net;
  frozen.set_requires_grad(false);

  HeadMaps m;
  m.p_al_1 = sample.baseline.like<double>();
  m.p_al_2 = m.p_al_1;
  m.p_nl = m.p_al_1;
  m.coverage = sample.baseline.like<std::uint32_t>();
  for (auto z0 : oz)
    for (auto y0 : oy)
      for (auto x0 : ox) {
        const Patch patch = crop(sample, {z0, y0, x0}, p);
        const PredictionTriple out = frozen.forward(stack(std::span<const Patch>(&patch, 1)).input);
        std::size_t i = 0;
        for (std::size_t z = 0; z < p; ++z)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x, ++i) {
              const std::size_t v = m.coverage.index(z0 + z, y0 + y, x0 + x);
              m.p_al_1[v] += out.p_al_1[i];
              m.p_al_2[v] += out.p_al_2[i];
              m.p_nl[v] += out.p_nl[i];
              m.coverage[v] += 1;
            }
      }
  const Array count = m.coverage.data().cast<double>();
  if ((count == 0).any()) throw std::logic_error("sliding window left a voxel uncovered");
  m.p_al_1.data() /= count;
  m.p_al_2.data() /= count;
  m.p_nl.data() /= count;

  const auto brain = sample.brain_mask.data() != 0;
  auto binarize = [&](const Volume3D& prob) {
    LabelVolume out = prob.like<std::uint8_t>();
    out.data() = (brain && prob.data() > cfg.threshold).cast<std::uint8_t>();
    return out;
  };
  m.m_al_1 = binarize(m.p_al_1);
  m.m_al_2 = binarize(m.p_al_2);
  m.m_nl = binarize(m.p_nl);
  return m;
}

LabelVolume predict_new_lesions(const SegNet& net, const Sample& sample, const InferenceConfig& cfg) {
  if (sample.kind != SampleKind::TwoTimePoint)
    throw std::invalid_argument("new-lesion prediction needs a two time-point sample");
  return sliding_window_predict(net, sample, cfg).m_nl;
}

void save_head_maps(const std::filesystem::path& dir, const std::string& stem, const HeadMaps& maps) {
  std::filesystem::create_directories(dir);
  save_volume(dir / (stem + "_p_al1.cvol"), maps.p_al_1);
  save_volume(dir / (stem + "_p_al2.cvol"), maps.p_al_2);
  save_volume(dir / (stem + "_p_nl.cvol"), maps.p_nl);
  save_volume(dir / (stem + "_m_al1.cvol"), maps.m_al_1);
  save_volume(dir / (stem + "_m_al2.cvol"), maps.m_al_2);
  save_volume(dir / (stem + "_m_nl.cvol"), maps.m_nl);
}

}  // namespace coact
