#pragma once

#include "coactseg/tensor.hpp"

#include <array>
#include <cstddef>

namespace coact {

/// Per-axis (depth, height, width) integer triple.
using Triple = std::array<std::size_t, 3>;

/// 3D cross-correlation.
///   input  [N, C, D, H, W]
///   weight [K, C, kd, kh, kw]
///   bias   [K] (may be undefined)
/// Output extent per axis is floor((D + 2*pad - k) / stride) + 1.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Triple stride = {1, 1, 1}, Triple padding = {0, 0, 0});

/// Adjoint of conv3d with respect to its input.
///   input  [N, C, D, H, W]
///   weight [C, K, kd, kh, kw]
///   bias   [K] (may be undefined)
/// Output extent per axis is (D - 1)*stride - 2*pad + k.
Tensor conv3d_transposed(const Tensor& input, const Tensor& weight, const Tensor& bias,
                         Triple stride = {1, 1, 1}, Triple padding = {0, 0, 0});

Triple conv_output_extent(Triple in, Triple kernel, Triple stride, Triple padding);
Triple conv_transposed_output_extent(Triple in, Triple kernel, Triple stride, Triple padding);

}  // namespace coact
