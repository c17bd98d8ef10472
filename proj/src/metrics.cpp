#include "coactseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace coact {

namespace {

void require_same_dims(const LabelVolume& a, const LabelVolume& b, const char* what) {
  if (a.dims() != b.dims()) throw std::invalid_argument(std::string(what) + ": mask dims differ");
}

struct Overlap {
  double inter = 0, pred = 0, gt = 0;
};

Overlap overlap(const LabelVolume& pred, const LabelVolume& gt, const char* what) {
  require_same_dims(pred, gt, what);
  const auto p = (pred.data() != 0), g = (gt.data() != 0);
  return {static_cast<double>((p && g).count()), static_cast<double>(p.count()), static_cast<double>(g.count())};
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform of one line (lower envelope of parabolas).
// `f` holds squared distances so far, `w` is the sample spacing.
void edt_line(std::vector<double>& f, double w, std::vector<double>& out, std::vector<std::size_t>& v,
              std::vector<double>& z) {
  const std::size_t n = f.size();
  out.assign(n, kInf);
  v.clear();
  z.clear();
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double pq = w * static_cast<double>(q);
    while (!v.empty()) {
      const double pv = w * static_cast<double>(v.back());
      const double s = ((f[q] + pq * pq) - (f[v.back()] + pv * pv)) / (2.0 * (pq - pv));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        v.push_back(q);
        z.push_back(s);
        break;
      }
    }
    if (v.empty()) {
      v.push_back(q);
      z.push_back(-kInf);
    }
  }
  if (v.empty()) return;
  std::size_t k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double pq = w * static_cast<double>(q);
    while (k + 1 < v.size() && z[k + 1] < pq) ++k;
    const double d = pq - w * static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

std::vector<double> directed_distances(const LabelVolume& from_surface, const Volume3D& to_distance) {
  std::vector<double> d;
  for (std::size_t i = 0; i < from_surface.voxel_count(); ++i)
    if (from_surface[i]) d.push_back(to_distance[i]);
  return d;
}

double nearest_rank_95(std::vector<double> d) {
  std::sort(d.begin(), d.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(d.size())));
  return d[std::max<std::size_t>(rank, 1) - 1];
}

struct SurfaceDistances {
  std::vector<double> pred_to_gt, gt_to_pred;
};

std::optional<SurfaceDistances> surface_distances(const LabelVolume& pred, const LabelVolume& gt,
                                                  const SurfaceDistanceOptions& opts, const char* what) {
  require_same_dims(pred, gt, what);
  const bool pe = count_foreground(pred) == 0, ge = count_foreground(gt) == 0;
  if (pe != ge) return std::nullopt;
  SurfaceDistances s;
  if (pe) return s;
  const LabelVolume sp = surface(pred), sg = surface(gt);
  s.pred_to_gt = directed_distances(sp, distance_to(sg, opts.use_spacing));
  s.gt_to_pred = directed_distances(sg, distance_to(sp, opts.use_spacing));
  return s;
}

}  // namespace

double dice(const LabelVolume& pred, const LabelVolume& gt) {
  const Overlap o = overlap(pred, gt, "dice");
  if (o.pred + o.gt == 0) return 1.0;
  return 2.0 * o.inter / (o.pred + o.gt);
}

double jaccard(const LabelVolume& pred, const LabelVolume& gt) {
  const Overlap o = overlap(pred, gt, "jaccard");
  const double uni = o.pred + o.gt - o.inter;
  if (uni == 0) return 1.0;
  return o.inter / uni;
}

std::vector<LesionInstance> connected_components_26(const LabelVolume& mask) {
  const auto [D, H, W] = mask.dims();
  std::vector<std::int64_t> label(mask.voxel_count(), -1);
  std::vector<LesionInstance> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.voxel_count(); ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    LesionInstance inst;
    inst.id = out.size();
    label[start] = static_cast<std::int64_t>(inst.id);
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      inst.voxels.push_back(v);
      const std::size_t z = v / (H * W), y = (v / W) % H, x = v % W;
      for (std::size_t nz = z ? z - 1 : 0; nz <= std::min(D - 1, z + 1); ++nz)
        for (std::size_t ny = y ? y - 1 : 0; ny <= std::min(H - 1, y + 1); ++ny)
          for (std::size_t nx = x ? x - 1 : 0; nx <= std::min(W - 1, x + 1); ++nx) {
            const std::size_t n = mask.index(nz, ny, nx);
            if (mask[n] && label[n] < 0) {
              label[n] = static_cast<std::int64_t>(inst.id);
              stack.push_back(n);
            }
          }
    }
    std::sort(inst.voxels.begin(), inst.voxels.end());
    out.push_back(std::move(inst));
  }
  return out;
}

LabelVolume surface(const LabelVolume& mask) {
  const auto [D, H, W] = mask.dims();
  LabelVolume s = mask.like<std::uint8_t>();
  for (std::size_t z = 0; z < D; ++z)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (!mask(z, y, x)) continue;
        const bool edge = z == 0 || y == 0 || x == 0 || z + 1 == D || y + 1 == H || x + 1 == W;
        s(z, y, x) = edge || !mask(z - 1, y, x) || !mask(z + 1, y, x) || !mask(z, y - 1, x) ||
                     !mask(z, y + 1, x) || !mask(z, y, x - 1) || !mask(z, y, x + 1);
      }
  return s;
}

Volume3D distance_to(const LabelVolume& sites, bool use_spacing) {
  const Dims3 dims = sites.dims();
  Volume3D d = sites.like<double>();
  for (std::size_t i = 0; i < d.voxel_count(); ++i) d[i] = sites[i] ? 0.0 : kInf;
  std::vector<double> line, out, z;
  std::vector<std::size_t> v;
  for (int axis = 2; axis >= 0; --axis) {
    const double w = use_spacing ? sites.spacing()[axis] : 1.0;
    const std::size_t n = dims[axis];
    const std::size_t stride = axis == 2 ? 1 : axis == 1 ? dims[2] : dims[1] * dims[2];
    const std::size_t lines = d.voxel_count() / n;
    for (std::size_t l = 0; l < lines; ++l) {
      // Start of line l: enumerate all index combinations except `axis`.
      const std::size_t outer = l / stride, inner = l % stride;
      const std::size_t base = outer * stride * n + inner;
      line.resize(n);
      for (std::size_t i = 0; i < n; ++i) line[i] = d[base + i * stride];
      edt_line(line, w, out, v, z);
      for (std::size_t i = 0; i < n; ++i) d[base + i * stride] = out[i];
    }
  }
  d.data() = d.data().sqrt();
  return d;
}

std::optional<double> hd95(const LabelVolume& pred, const LabelVolume& gt, const SurfaceDistanceOptions& opts) {
  const auto s = surface_distances(pred, gt, opts, "hd95");
  if (!s) return std::nullopt;
  if (s->pred_to_gt.empty()) return 0.0;
  return std::max(nearest_rank_95(s->pred_to_gt), nearest_rank_95(s->gt_to_pred));
}

std::optional<double> asd(const LabelVolume& pred, const LabelVolume& gt, const SurfaceDistanceOptions& opts) {
  const auto s = surface_distances(pred, gt, opts, "asd");
  if (!s) return std::nullopt;
  if (s->pred_to_gt.empty()) return 0.0;
  double total = 0.0;
  for (double d : s->pred_to_gt) total += d;
  for (double d : s->gt_to_pred) total += d;
  return total / static_cast<double>(s->pred_to_gt.size() + s->gt_to_pred.size());
}

LesionCounts lesion_counts(const LabelVolume& pred, const LabelVolume& gt, const LesionF1Options& opts) {
  require_same_dims(pred, gt, "lesion_f1");
  auto retained = [&](const LabelVolume& m, LabelVolume* keep) {
    std::vector<LesionInstance> kept;
    for (auto& c : connected_components_26(m)) {
      if (c.size() < opts.min_size) continue;
      for (auto v : c.voxels) (*keep)[v] = 1;
      kept.push_back(std::move(c));
    }
    return kept;
  };
  LabelVolume pred_keep = pred.like<std::uint8_t>(), gt_keep = gt.like<std::uint8_t>();
  const auto pc = retained(pred, &pred_keep);
  const auto gc = retained(gt, &gt_keep);
  auto touches = [](const LesionInstance& c, const LabelVolume& other) {
    return std::any_of(c.voxels.begin(), c.voxels.end(), [&](std::size_t v) { return other[v] != 0; });
  };
  LesionCounts n;
  for (const auto& c : gc) (touches(c, pred_keep) ? n.tp : n.fn) += 1;
  for (const auto& c : pc)
    if (!touches(c, gt_keep)) ++n.fp;
  return n;
}

std::optional<double> lesion_f1(const LabelVolume& pred, const LabelVolume& gt, const LesionF1Options& opts) {
  const LesionCounts n = lesion_counts(pred, gt, opts);
  const double denom = static_cast<double>(2 * n.tp + n.fp + n.fn);
  if (denom == 0) return std::nullopt;
  return 2.0 * static_cast<double>(n.tp) / denom;
}

}  // namespace coact
