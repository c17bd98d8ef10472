#include "coactseg/conv.hpp"

#include "coactseg/parallel.hpp"

#include <algorithm>
#include <string>

namespace coact {

namespace {

using Index = Eigen::Index;
using StridedMap = Eigen::Map<const Eigen::ArrayXd, 0, Eigen::InnerStride<>>;
using StridedMutMap = Eigen::Map<Eigen::ArrayXd, 0, Eigen::InnerStride<>>;

// Shapes of one correlation: `image` [N, C, in] is correlated with `kernel`
// [K, C, ker] to produce `response` [N, K, out].
struct Geometry {
  std::size_t batch = 0, image_channels = 0, response_channels = 0;
  Triple in{}, out{}, ker{}, stride{}, pad{};

  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t ker_volume() const { return ker[0] * ker[1] * ker[2]; }
};

// Output positions o in [lo, hi] that read input o*stride - pad + offset
// inside [0, in).
struct Span {
  long lo = 0;
  long hi = -1;
  bool empty() const { return hi < lo; }
  Index length() const { return hi - lo + 1; }
};

long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

Span valid_outputs(std::size_t in, std::size_t out, std::size_t stride, std::size_t pad, std::size_t offset) {
  const long s = static_cast<long>(stride);
  const long shift = static_cast<long>(pad) - static_cast<long>(offset);
  Span r;
  r.lo = std::max(0L, -floor_div(-shift, s));  // ceil(shift / s)
  r.hi = std::min(static_cast<long>(out) - 1, floor_div(static_cast<long>(in) - 1 + shift, s));
  return r;
}

long input_pos(long o, std::size_t stride, std::size_t pad, std::size_t offset) {
  return o * static_cast<long>(stride) - static_cast<long>(pad) + static_cast<long>(offset);
}

// Visits every (kernel offset, output row) pair with a non-empty valid range
// along the innermost axis. fn(ker_index, out_row_offset, in_row_offset, w_span)
template <class Fn>
void for_each_row(const Geometry& g, Fn&& fn) {
  std::size_t kidx = 0;
  for (std::size_t a = 0; a < g.ker[0]; ++a) {
    const Span sd = valid_outputs(g.in[0], g.out[0], g.stride[0], g.pad[0], a);
    for (std::size_t b = 0; b < g.ker[1]; ++b) {
      const Span sh = valid_outputs(g.in[1], g.out[1], g.stride[1], g.pad[1], b);
      for (std::size_t e = 0; e < g.ker[2]; ++e, ++kidx) {
        const Span sw = valid_outputs(g.in[2], g.out[2], g.stride[2], g.pad[2], e);
        if (sd.empty() || sh.empty() || sw.empty()) continue;
        const long iw0 = input_pos(sw.lo, g.stride[2], g.pad[2], e);
        for (long od = sd.lo; od <= sd.hi; ++od) {
          const long id = input_pos(od, g.stride[0], g.pad[0], a);
          for (long oh = sh.lo; oh <= sh.hi; ++oh) {
            const long ih = input_pos(oh, g.stride[1], g.pad[1], b);
            const auto out_off = static_cast<Index>((od * static_cast<long>(g.out[1]) + oh) *
                                                        static_cast<long>(g.out[2]) + sw.lo);
            const auto in_off = static_cast<Index>((id * static_cast<long>(g.in[1]) + ih) *
                                                       static_cast<long>(g.in[2]) + iw0);
            fn(kidx, out_off, in_off, sw);
          }
        }
      }
    }
  }
}

// response[n,k] = sum_c sum_offsets kernel[k,c] * image[n,c]
void correlate(const Geometry& g, const double* image, const double* kernel, double* response) {
  const std::size_t iv = g.in_volume(), ov = g.out_volume(), kv = g.ker_volume();
  const auto stride = static_cast<Index>(g.stride[2]);
  parallel_for(0, g.batch * g.response_channels, [&](std::size_t nk) {
    const std::size_t n = nk / g.response_channels, k = nk % g.response_channels;
    double* out = response + nk * ov;
    std::fill(out, out + ov, 0.0);
    for (std::size_t c = 0; c < g.image_channels; ++c) {
      const double* in = image + (n * g.image_channels + c) * iv;
      const double* w = kernel + (k * g.image_channels + c) * kv;
      for_each_row(g, [&](std::size_t kidx, Index oo, Index io, const Span& sw) {
        Eigen::Map<Eigen::ArrayXd>(out + oo, sw.length()) +=
            w[kidx] * StridedMap(in + io, sw.length(), Eigen::InnerStride<>(stride));
      });
    }
  });
}

// image[n,c] = sum_k sum_offsets kernel[k,c] * response[n,k], scattered back
// to the positions each response voxel read.
void scatter(const Geometry& g, const double* response, const double* kernel, double* image) {
  const std::size_t iv = g.in_volume(), ov = g.out_volume(), kv = g.ker_volume();
  const auto stride = static_cast<Index>(g.stride[2]);
  parallel_for(0, g.batch * g.image_channels, [&](std::size_t nc) {
    const std::size_t n = nc / g.image_channels, c = nc % g.image_channels;
    double* in = image + nc * iv;
    std::fill(in, in + iv, 0.0);
    for (std::size_t k = 0; k < g.response_channels; ++k) {
      const double* out = response + (n * g.response_channels + k) * ov;
      const double* w = kernel + (k * g.image_channels + c) * kv;
      for_each_row(g, [&](std::size_t kidx, Index oo, Index io, const Span& sw) {
        StridedMutMap(in + io, sw.length(), Eigen::InnerStride<>(stride)) +=
            w[kidx] * Eigen::Map<const Eigen::ArrayXd>(out + oo, sw.length());
      });
    }
  });
}

// kernel_grad[k,c] = sum_n sum_positions response[n,k] * image[n,c]
void kernel_gradient(const Geometry& g, const double* image, const double* response, double* kernel_grad) {
  const std::size_t iv = g.in_volume(), ov = g.out_volume(), kv = g.ker_volume();
  const auto stride = static_cast<Index>(g.stride[2]);
  parallel_for(0, g.response_channels * g.image_channels, [&](std::size_t kc) {
    const std::size_t k = kc / g.image_channels, c = kc % g.image_channels;
    double* gw = kernel_grad + kc * kv;
    std::fill(gw, gw + kv, 0.0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* in = image + (n * g.image_channels + c) * iv;
      const double* out = response + (n * g.response_channels + k) * ov;
      for_each_row(g, [&](std::size_t kidx, Index oo, Index io, const Span& sw) {
        gw[kidx] += (Eigen::Map<const Eigen::ArrayXd>(out + oo, sw.length()) *
                     StridedMap(in + io, sw.length(), Eigen::InnerStride<>(stride)))
                        .sum();
      });
    }
  });
}

void add_bias(Array& out, const Array& bias, std::size_t batch, std::size_t channels, std::size_t volume) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < channels; ++k)
      out.segment(static_cast<Index>((n * channels + k) * volume), static_cast<Index>(volume)) +=
          bias[static_cast<Index>(k)];
}

Array bias_gradient(const Array& grad, std::size_t batch, std::size_t channels, std::size_t volume) {
  Array g = Array::Zero(static_cast<Index>(channels));
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < channels; ++k)
      g[static_cast<Index>(k)] +=
          grad.segment(static_cast<Index>((n * channels + k) * volume), static_cast<Index>(volume)).sum();
  return g;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

Triple spatial(const Tensor& t) { return {t.dim(2), t.dim(3), t.dim(4)}; }

void check_common(const char* op, const Tensor& input, const Tensor& weight, Triple stride) {
  require(input.rank() == 5, std::string(op) + ": input must be [N,C,D,H,W], got " + to_string(input.shape()));
  require(weight.rank() == 5, std::string(op) + ": weight must be 5-D, got " + to_string(weight.shape()));
  for (auto s : stride) require(s >= 1, std::string(op) + ": stride must be >= 1");
}

}  // namespace

Triple conv_output_extent(Triple in, Triple kernel, Triple stride, Triple padding) {
  Triple out{};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t padded = in[i] + 2 * padding[i];
    require(stride[i] >= 1, "conv3d: stride must be >= 1");
    require(kernel[i] <= padded, "conv3d: kernel extent " + std::to_string(kernel[i]) +
                                     " exceeds padded input extent " + std::to_string(padded) +
                                     " on axis " + std::to_string(i));
    out[i] = (padded - kernel[i]) / stride[i] + 1;
  }
  return out;
}

Triple conv_transposed_output_extent(Triple in, Triple kernel, Triple stride, Triple padding) {
  Triple out{};
  for (std::size_t i = 0; i < 3; ++i) {
    require(stride[i] >= 1, "conv3d_transposed: stride must be >= 1");
    const std::size_t full = (in[i] - 1) * stride[i] + kernel[i];
    require(full > 2 * padding[i], "conv3d_transposed: padding removes the whole output on axis " +
                                       std::to_string(i));
    out[i] = full - 2 * padding[i];
  }
  return out;
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Triple stride, Triple padding) {
  check_common("conv3d", input, weight, stride);
  require(weight.dim(1) == input.dim(1),
          "conv3d: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
              std::to_string(input.dim(1)));
  Geometry g;
  g.batch = input.dim(0);
  g.image_channels = input.dim(1);
  g.response_channels = weight.dim(0);
  g.in = spatial(input);
  g.ker = {weight.dim(2), weight.dim(3), weight.dim(4)};
  g.stride = stride;
  g.pad = padding;
  g.out = conv_output_extent(g.in, g.ker, stride, padding);
  if (bias.defined())
    require(bias.numel() == g.response_channels, "conv3d: bias length must equal output channels");

  Array out(static_cast<Index>(g.batch * g.response_channels * g.out_volume()));
  correlate(g, input.values().data(), weight.values().data(), out.data());
  if (bias.defined()) add_bias(out, bias.values(), g.batch, g.response_channels, g.out_volume());

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result({g.batch, g.response_channels, g.out[0], g.out[1], g.out[2]}, std::move(out),
                     std::move(inputs), [g](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      Array gx(px.value.size());
      scatter(g, self.grad.data(), pw.value.data(), gx.data());
      px.accumulate(gx);
    }
    if (pw.requires_grad) {
      Array gw(pw.value.size());
      kernel_gradient(g, px.value.data(), self.grad.data(), gw.data());
      pw.accumulate(gw);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad)
      self.parents[2]->accumulate(bias_gradient(self.grad, g.batch, g.response_channels, g.out_volume()));
  });
}

Tensor conv3d_transposed(const Tensor& input, const Tensor& weight, const Tensor& bias, Triple stride,
                         Triple padding) {
  check_common("conv3d_transposed", input, weight, stride);
  require(weight.dim(0) == input.dim(1),
          "conv3d_transposed: weight expects " + std::to_string(weight.dim(0)) +
              " input channels, input has " + std::to_string(input.dim(1)));
  // The transposed op is the scatter of a correlation whose response side is
  // this op's input and whose image side is this op's output.
  Geometry g;
  g.batch = input.dim(0);
  g.response_channels = weight.dim(0);
  g.image_channels = weight.dim(1);
  g.out = spatial(input);
  g.ker = {weight.dim(2), weight.dim(3), weight.dim(4)};
  g.stride = stride;
  g.pad = padding;
  g.in = conv_transposed_output_extent(g.out, g.ker, stride, padding);
  if (bias.defined())
    require(bias.numel() == g.image_channels, "conv3d_transposed: bias length must equal output channels");

  Array out(static_cast<Index>(g.batch * g.image_channels * g.in_volume()));
  scatter(g, input.values().data(), weight.values().data(), out.data());
  if (bias.defined()) add_bias(out, bias.values(), g.batch, g.image_channels, g.in_volume());

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result({g.batch, g.image_channels, g.in[0], g.in[1], g.in[2]}, std::move(out),
                     std::move(inputs), [g](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      Array gx(px.value.size());
      correlate(g, self.grad.data(), pw.value.data(), gx.data());
      px.accumulate(gx);
    }
    if (pw.requires_grad) {
      Array gw(pw.value.size());
      kernel_gradient(g, self.grad.data(), px.value.data(), gw.data());
      pw.accumulate(gw);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad)
      self.parents[2]->accumulate(bias_gradient(self.grad, g.batch, g.image_channels, g.in_volume()));
  });
}

}  // namespace coact
