#pragma once

// Direct, unvectorized reference computations used to check the engine. They
// deliberately avoid the library's kernels and run in double precision.

#include <cstddef>
#include <vector>

#include "ssrstf/params.hpp"
#include "ssrstf/tensor.hpp"

namespace ssrstf::verify {

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// Triple-loop product of (M, K) and (K, N).
Tensor<double> matmul_triple_loop(const Tensor<double>& a, const Tensor<double>& b);

/// exp-normalize without max subtraction, in long double.
std::vector<double> softmax_direct(const std::vector<double>& logits);

/// 0.5 x (1 + erf(x / sqrt 2)) in long double.
double gelu_erf(double x);

/// y[i] = sum_j w[j] x[i + (j - c) d], treating out-of-range x as zero.
std::vector<double> conv1d_direct(const std::vector<double>& x, const std::vector<double>& w,
                                  std::size_t dilation);

/// Coefficients of P1(z) * P2(z^d) where P1, P2 have the given coefficients.
std::vector<double> polynomial_kernel_product(const std::vector<double>& w_dw,
                                              const std::vector<double>& w_dwd,
                                              std::size_t dilation);

/// Depth-wise convolution of a rank-4 grid along `axis` with per-channel
/// kernels (C, K), by direct summation over every output element.
Tensor<double> depthwise_grid_direct(const Tensor<double>& x, const Tensor<double>& w,
                                     std::size_t axis, std::size_t dilation);

}  // namespace ssrstf::verify
