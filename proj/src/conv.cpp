#include "ssrstf/conv.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ssrstf/ops.hpp"

namespace ssrstf {

std::size_t effective_extent(std::size_t k, std::size_t d) {
  if (d < 1 || k < d)
    throw std::invalid_argument("effective_extent requires k >= d >= 1, got k=" +
                                std::to_string(k) + " d=" + std::to_string(d));
  return (2 * d - 1) + d * (k / d - 1);
}

std::size_t AxisKernel::halo() const { return (effective_extent(k, d) - 1) / 2; }

void SSRAKernelSpec::validate() const {
  auto check = [](const AxisKernel& a, const char* which) {
    if (a.d < 1 || a.k < a.d)
      throw std::invalid_argument(std::string(which) + " axis needs k >= d >= 1");
    if (a.dwd_size() % 2 == 0)
      throw std::invalid_argument(std::string(which) + " axis: dilated factor floor(" +
                                  std::to_string(a.k) + "/" + std::to_string(a.d) + ") = " +
                                  std::to_string(a.dwd_size()) + " is even");
    if (effective_extent(a.k, a.d) != a.k)
      throw std::invalid_argument(std::string(which) + " axis: effective extent " +
                                  std::to_string(effective_extent(a.k, a.d)) +
                                  " differs from k = " + std::to_string(a.k));
  };
  check(long_axis, "long");
  if (short_axis) check(*short_axis, "short");
}

std::string SSRAKernelSpec::shape_label() const {
  return std::to_string(long_axis.k) + "x" + std::to_string(short_axis ? short_axis->k : 1);
}

std::string SSRAKernelSpec::to_string() const {
  std::ostringstream os;
  os << '{' << long_axis.k << ',' << long_axis.d << ',';
  if (short_axis)
    os << short_axis->k << ',' << short_axis->d;
  else
    os << "-,-";
  os << '}';
  return os.str();
}

SSRAKernelSpec SSRAKernelSpec::parse(const std::string& text) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : text) {
    if (c == '{' || c == '}' || c == ' ') continue;
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  if (fields.size() != 4)
    throw std::invalid_argument("kernel spec needs four fields k1,d1,k2,d2: '" + text + "'");
  auto number = [&](const std::string& f) -> std::size_t {
    std::size_t pos = 0;
    long v = -1;
    try {
      v = std::stol(f, &pos);
    } catch (const std::exception&) {
    }
    if (v < 1 || pos != f.size())
      throw std::invalid_argument("kernel spec field '" + f + "' is not a positive integer");
    return static_cast<std::size_t>(v);
  };
  SSRAKernelSpec spec;
  spec.long_axis = {number(fields[0]), number(fields[1])};
  if (fields[2] == "-" && fields[3] == "-")
    spec.short_axis.reset();
  else
    spec.short_axis = AxisKernel{number(fields[2]), number(fields[3])};
  spec.validate();
  return spec;
}

const std::vector<SSRAKernelSpec>& reference_kernel_specs() {
  static const std::vector<SSRAKernelSpec> specs = {
      {{35, 3}, AxisKernel{35, 3}},
      {{35, 3}, AxisKernel{11, 2}},
      {{23, 3}, AxisKernel{7, 2}},
      {{11, 2}, AxisKernel{11, 2}},
      {{11, 2}, std::nullopt},
  };
  return specs;
}

template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& weights, std::size_t axis,
                        std::size_t dilation) {
  if (!x.valid() || !weights.valid()) throw UsageError("depthwise_conv1d: unbound variable");
  auto& tape = *x.tape();
  const Shape& sx = x.shape();
  const Shape& sw = weights.shape();
  if (sx.size() < 2 || axis >= sx.size() - 1)
    throw ShapeError("depthwise_conv1d: axis " + std::to_string(axis) + " out of range for " +
                     to_string(sx));
  if (dilation < 1) throw std::invalid_argument("depthwise_conv1d: dilation must be >= 1");
  const std::size_t C = sx.back();
  if (sw.size() != 2 || sw[0] != C)
    throw ShapeError("depthwise_conv1d: weights " + to_string(sw) + " for input " + to_string(sx));
  const std::size_t K = sw[1];
  if (K % 2 == 0)
    throw std::invalid_argument("depthwise_conv1d: kernel size " + std::to_string(K) +
                                " is even");

  std::size_t outer = 1, mid = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sx[i];
  for (std::size_t i = axis + 1; i < sx.size() - 1; ++i) mid *= sx[i];
  const std::size_t L = sx[axis];
  const std::size_t row = mid * C;  // contiguous block for one position on `axis`
  const long center = static_cast<long>(K / 2);

  // Transposed taps: wt[j * C + c] so the channel loop is contiguous.
  auto taps = [C, K](const Tensor<T>& w) {
    std::vector<T> wt(K * C);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < K; ++j) wt[j * C + c] = w[c * K + j];
    return wt;
  };
  auto source = [=](std::size_t i, std::size_t j) -> long {
    return static_cast<long>(i) + (static_cast<long>(j) - center) * static_cast<long>(dilation);
  };

  const auto& xv = x.value();
  const std::vector<T> wt = taps(weights.value());
  Tensor<T> out(sx);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* xo = xv.ptr() + o * L * row;
    T* yo = out.ptr() + o * L * row;
    for (std::size_t i = 0; i < L; ++i) {
      T* y = yo + i * row;
      for (std::size_t j = 0; j < K; ++j) {
        const long p = source(i, j);
        if (p < 0 || p >= static_cast<long>(L)) continue;
        const T* xs = xo + static_cast<std::size_t>(p) * row;
        const T* w = wt.data() + j * C;
        for (std::size_t m = 0; m < mid; ++m)
          for (std::size_t c = 0; c < C; ++c) y[m * C + c] += w[c] * xs[m * C + c];
      }
    }
  }

  const std::size_t x_id = x.id(), w_id = weights.id();
  return tape.record(std::move(out), {x, weights}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    const auto& xv = t.value(x_id);
    const bool want_x = t.requires_grad(x_id);
    const bool want_w = t.requires_grad(w_id);
    const std::vector<T> wt = taps(t.value(w_id));
    std::vector<T> gwt(want_w ? K * C : 0, T(0));
    Tensor<T>* gx = want_x ? &t.grad_slot(x_id) : nullptr;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* xo = xv.ptr() + o * L * row;
      const T* go = g.ptr() + o * L * row;
      for (std::size_t i = 0; i < L; ++i) {
        const T* gi = go + i * row;
        for (std::size_t j = 0; j < K; ++j) {
          const long p = source(i, j);
          if (p < 0 || p >= static_cast<long>(L)) continue;
          const std::size_t src = o * L * row + static_cast<std::size_t>(p) * row;
          if (gx) {
            T* gxs = gx->ptr() + src;
            const T* w = wt.data() + j * C;
            for (std::size_t m = 0; m < mid; ++m)
              for (std::size_t c = 0; c < C; ++c) gxs[m * C + c] += w[c] * gi[m * C + c];
          }
          if (want_w) {
            const T* xs = xo + static_cast<std::size_t>(p) * row;
            T* gw = gwt.data() + j * C;
            for (std::size_t m = 0; m < mid; ++m)
              for (std::size_t c = 0; c < C; ++c) gw[c] += gi[m * C + c] * xs[m * C + c];
          }
        }
      }
    }
    if (want_w) {
      auto& gw = t.grad_slot(w_id);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < K; ++j) gw[c * K + j] += gwt[j * C + c];
    }
  });
}

template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& weights, const Conv1DSpec& spec) {
  if (weights.valid() && weights.shape().size() == 2 && weights.shape()[1] != spec.kernel_size)
    throw ShapeError("depthwise_conv1d: weights " + to_string(weights.shape()) +
                     " disagree with kernel size " + std::to_string(spec.kernel_size));
  if (x.valid() && x.shape().size() != 4)
    throw ShapeError("depthwise_conv1d: expected a batch x T x J x C grid, got " +
                     to_string(x.shape()));
  return depthwise_conv1d(x, weights, axis_index(spec.axis), spec.dilation);
}

template <typename T>
Var<T> pointwise_conv(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  if (x.valid() && w.valid() && w.shape().size() == 2 && x.shape().back() != w.shape()[0])
    throw ShapeError("pointwise_conv: input channels " + std::to_string(x.shape().back()) +
                     " vs weight " + to_string(w.shape()));
  return linear(x, w, bias);
}

template <typename T>
Tensor<T> compose_dense_kernel(const Tensor<T>& w_dw, const Tensor<T>& w_dwd,
                               std::size_t dilation) {
  if (w_dw.rank() != 2 || w_dwd.rank() != 2 || w_dw.extent(0) != w_dwd.extent(0))
    throw ShapeError("compose_dense_kernel: kernels " + to_string(w_dw.shape()) + " and " +
                     to_string(w_dwd.shape()) + " must be (C, K) with equal C");
  const std::size_t C = w_dw.extent(0), K1 = w_dw.extent(1), K2 = w_dwd.extent(1);
  if (K1 % 2 == 0 || K2 % 2 == 0)
    throw std::invalid_argument("compose_dense_kernel: kernel lengths must be odd, got " +
                                std::to_string(K1) + " and " + std::to_string(K2));
  if (dilation < 1) throw std::invalid_argument("compose_dense_kernel: dilation must be >= 1");
  const std::size_t E = K1 + dilation * (K2 - 1);
  Tensor<T> out({C, E});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t b = 0; b < K2; ++b)
      for (std::size_t a = 0; a < K1; ++a)
        out[c * E + a + b * dilation] += w_dw[c * K1 + a] * w_dwd[c * K2 + b];
  return out;
}

template <typename T>
Var<T> cascade_conv1d(const Var<T>& x, const Var<T>& w_dw, const Var<T>& w_dwd,
                      std::size_t dilation, std::size_t axis) {
  const std::size_t halo = (w_dw.shape()[1] - 1) / 2 + dilation * ((w_dwd.shape()[1] - 1) / 2);
  const std::size_t L = x.shape().at(axis);
  auto y = pad(x, axis, halo, halo);
  y = depthwise_conv1d(y, w_dw, axis, 1);
  y = depthwise_conv1d(y, w_dwd, axis, dilation);
  return slice(y, axis, halo, L);
}

#define SSRSTF_INSTANTIATE_CONV(T)                                                          \
  template Var<T> depthwise_conv1d(const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
  template Var<T> depthwise_conv1d(const Var<T>&, const Var<T>&, const Conv1DSpec&);        \
  template Var<T> pointwise_conv(const Var<T>&, const Var<T>&, const Var<T>&);              \
  template Tensor<T> compose_dense_kernel(const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Var<T> cascade_conv1d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,  \
                                 std::size_t);

SSRSTF_INSTANTIATE_CONV(float)
SSRSTF_INSTANTIATE_CONV(double)

#undef SSRSTF_INSTANTIATE_CONV

}  // namespace ssrstf
