#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ssrstf/autograd.hpp"
#include "ssrstf/tensor.hpp"

namespace ssrstf {

/// Axis of a batch x T x J x C feature grid.
enum class GridAxis { temporal = 1, joint = 2 };

inline std::size_t axis_index(GridAxis a) { return static_cast<std::size_t>(a); }

/// Geometry of one depth-wise 1D convolution. "Same" output extent via zero padding.
struct Conv1DSpec {
  std::size_t kernel_size = 1;
  std::size_t dilation = 1;
  GridAxis axis = GridAxis::temporal;
};

/// Extent/dilation pair for one axis of the irregular large kernel.
struct AxisKernel {
  std::size_t k = 1;
  std::size_t d = 1;

  /// Length of the plain depth-wise factor, 2d - 1.
  std::size_t dw_size() const { return 2 * d - 1; }
  /// Length of the dilated depth-wise factor, floor(k / d).
  std::size_t dwd_size() const { return k / d; }
  /// Half-width of the composed kernel.
  std::size_t halo() const;

  friend bool operator==(const AxisKernel&, const AxisKernel&) = default;
};

/// {k1, d1, k2, d2}: the long-axis pair is mandatory, the short-axis pair may be
/// absent ("{11, 2, -, -}"), in which case DW2/DWD2 are skipped entirely.
struct SSRAKernelSpec {
  AxisKernel long_axis{35, 3};
  std::optional<AxisKernel> short_axis = AxisKernel{11, 2};

  /// Throws std::invalid_argument unless every 1D factor is odd and the
  /// effective extent of each axis equals its nominal k.
  void validate() const;

  /// "35x11" style label.
  std::string shape_label() const;
  /// "{35,3,11,2}" / "{11,2,-,-}".
  std::string to_string() const;
  /// Parses "35,3,11,2" or "11,2,-,-" (braces and spaces optional).
  static SSRAKernelSpec parse(const std::string& text);

  friend bool operator==(const SSRAKernelSpec&, const SSRAKernelSpec&) = default;
};

/// The five kernel shapes compared in the kernel-shape ablation.
const std::vector<SSRAKernelSpec>& reference_kernel_specs();

/// (2d - 1) + d * (floor(k / d) - 1). Requires k >= d >= 1.
std::size_t effective_extent(std::size_t k, std::size_t d);

/// Depth-wise cross-correlation along `axis` of a tensor whose last axis is
/// channels: y[i] = sum_j w[c, j] x[i + (j - center) * dilation], zero padded,
/// extents preserved. `weights` is (channels, kernel_size), kernel_size odd.
template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& weights, std::size_t axis,
                        std::size_t dilation);

template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& weights, const Conv1DSpec& spec);

/// 1x1 convolution: per-position linear map over channels, w is (C_in, C_out).
template <typename T>
Var<T> pointwise_conv(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

/// Dense per-channel kernel equivalent to a plain depth-wise kernel followed by
/// a depth-wise kernel with dilation `dilation`: the discrete convolution of the
/// two weight rows with the second upsampled by the dilation. Shapes (C, K1),
/// (C, K2) -> (C, K1 + dilation * (K2 - 1)). Both lengths must be odd.
template <typename T>
Tensor<T> compose_dense_kernel(const Tensor<T>& w_dw, const Tensor<T>& w_dwd,
                               std::size_t dilation);

/// Plain depth-wise conv (dilation 1) then dilated depth-wise conv along one
/// axis, with zero padding applied once for the pair: the result equals
/// depthwise_conv1d with compose_dense_kernel(w_dw, w_dwd, dilation).
template <typename T>
Var<T> cascade_conv1d(const Var<T>& x, const Var<T>& w_dw, const Var<T>& w_dwd,
                      std::size_t dilation, std::size_t axis);

}  // namespace ssrstf
