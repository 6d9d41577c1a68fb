#include "ssrstf/verify/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace ssrstf::verify {

Tensor<double> matmul_triple_loop(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    throw ShapeError("matmul_triple_loop: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t M = a.extent(0), K = a.extent(1), N = b.extent(1);
  Tensor<double> c({M, N});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < K; ++k) s += static_cast<long double>(a.at({i, k})) * b.at({k, j});
      c.at({i, j}) = static_cast<double>(s);
    }
  return c;
}

std::vector<double> softmax_direct(const std::vector<double>& logits) {
  long double total = 0;
  for (double v : logits) total += std::exp(static_cast<long double>(v));
  std::vector<double> out;
  for (double v : logits) out.push_back(static_cast<double>(std::exp(static_cast<long double>(v)) / total));
  return out;
}

double gelu_erf(double x) {
  const long double xl = x;
  return static_cast<double>(0.5L * xl * (1.0L + std::erf(xl / std::sqrt(2.0L))));
}

std::vector<double> conv1d_direct(const std::vector<double>& x, const std::vector<double>& w,
                                  std::size_t dilation) {
  const long n = static_cast<long>(x.size());
  const long c = static_cast<long>(w.size() / 2);
  std::vector<double> y(x.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    long double s = 0;
    for (long j = 0; j < static_cast<long>(w.size()); ++j) {
      const long p = i + (j - c) * static_cast<long>(dilation);
      if (p >= 0 && p < n) s += static_cast<long double>(w[j]) * x[p];
    }
    y[i] = static_cast<double>(s);
  }
  return y;
}

std::vector<double> polynomial_kernel_product(const std::vector<double>& w_dw,
                                              const std::vector<double>& w_dwd,
                                              std::size_t dilation) {
  // Upsample the dilated factor: insert (d - 1) zeros between taps.
  std::vector<double> up((w_dwd.size() - 1) * dilation + 1, 0.0);
  for (std::size_t b = 0; b < w_dwd.size(); ++b) up[b * dilation] = w_dwd[b];
  std::vector<double> out(w_dw.size() + up.size() - 1, 0.0);
  for (std::size_t i = 0; i < w_dw.size(); ++i)
    for (std::size_t j = 0; j < up.size(); ++j) out[i + j] += w_dw[i] * up[j];
  return out;
}

Tensor<double> depthwise_grid_direct(const Tensor<double>& x, const Tensor<double>& w,
                                     std::size_t axis, std::size_t dilation) {
  if (x.rank() != 4 || axis < 1 || axis > 2)
    throw ShapeError("depthwise_grid_direct: need a rank-4 grid and axis 1 or 2");
  const auto& s = x.shape();
  const std::size_t K = w.extent(1);
  const long c = static_cast<long>(K / 2);
  Tensor<double> y(s);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t t = 0; t < s[1]; ++t)
      for (std::size_t j = 0; j < s[2]; ++j)
        for (std::size_t ch = 0; ch < s[3]; ++ch) {
          long double acc = 0;
          for (std::size_t k = 0; k < K; ++k) {
            const long off = (static_cast<long>(k) - c) * static_cast<long>(dilation);
            long tt = static_cast<long>(t), jj = static_cast<long>(j);
            if (axis == 1) tt += off; else jj += off;
            if (tt < 0 || jj < 0 || tt >= static_cast<long>(s[1]) || jj >= static_cast<long>(s[2]))
              continue;
            acc += static_cast<long double>(w.at({ch, k})) *
                   x.at({b, static_cast<std::size_t>(tt), static_cast<std::size_t>(jj), ch});
          }
          y.at({b, t, j, ch}) = static_cast<double>(acc);
        }
  return y;
}

}  // namespace ssrstf::verify
