#include "ssrstf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "ssrstf/gemm.hpp"

namespace ssrstf {

namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& v) {
  if (!v.valid()) throw UsageError("operation on an unbound variable");
  return *v.tape();
}

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() != b.tape()) throw UsageError("operands recorded on different tapes");
}

// For every element of `out` (row-major), the flat offset of the element of
// `in` it reads under right-aligned broadcasting.
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t rank = out.size();
  const std::size_t shift = rank - in.size();
  std::vector<std::size_t> in_strides(rank, 0);
  {
    auto s = strides_of(in);
    for (std::size_t i = 0; i < in.size(); ++i) in_strides[shift + i] = in[i] == 1 ? 0 : s[i];
  }
  std::vector<std::size_t> offsets(numel(out));
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t n = 0; n < offsets.size(); ++n) {
    offsets[n] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += in_strides[ax];
      if (idx[ax] < out[ax]) break;
      off -= in_strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return offsets;
}

enum class Binary { add, sub, mul };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Binary kind) {
  auto& tape = tape_of(a);
  same_tape(a, b);
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(out_shape);
  const bool plain = av.shape() == out_shape && bv.shape() == out_shape;
  std::shared_ptr<std::vector<std::size_t>> oa, ob;
  if (!plain) {
    oa = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(out_shape, av.shape()));
    ob = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(out_shape, bv.shape()));
  }
  auto ia = [&](std::size_t i) { return plain ? i : (*oa)[i]; };
  auto ib = [&](std::size_t i) { return plain ? i : (*ob)[i]; };
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[ia(i)], y = bv[ib(i)];
    out[i] = kind == Binary::add ? x + y : kind == Binary::sub ? x - y : x * y;
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return tape.record(std::move(out), {a, b},
                     [a_id, b_id, kind, plain, oa, ob](Tape<T>& t, std::size_t self) {
                       const auto& g = t.grad_slot(self);
                       auto at = [&](const std::shared_ptr<std::vector<std::size_t>>& o,
                                     std::size_t i) { return plain ? i : (*o)[i]; };
                       if (t.requires_grad(a_id)) {
                         auto& ga = t.grad_slot(a_id);
                         const auto& bv = t.value(b_id);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           T d = kind == Binary::mul ? g[i] * bv[at(ob, i)] : g[i];
                           ga[at(oa, i)] += d;
                         }
                       }
                       if (t.requires_grad(b_id)) {
                         auto& gb = t.grad_slot(b_id);
                         const auto& av = t.value(a_id);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           T d = kind == Binary::mul ? g[i] * av[at(oa, i)]
                                 : kind == Binary::sub ? -g[i]
                                                       : g[i];
                           gb[at(ob, i)] += d;
                         }
                       }
                     });
}

Shape drop_last(const Shape& s) {
  if (s.size() <= 1) return Shape{1};
  return Shape(s.begin(), s.end() - 1);
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::add);
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::sub);
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::mul);
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  auto& tape = tape_of(a);
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  const std::size_t a_id = a.id();
  return tape.record(std::move(out), {a}, [a_id, factor](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    auto& ga = t.grad_slot(a_id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa.back() != sb[sb.size() - 2])
    throw ShapeError("matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  const std::size_t M = sa[sa.size() - 2], K = sa.back(), N = sb.back();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch_out;
  if (batch_a.empty() && batch_b.empty()) {
    batch_out = Shape{1};
  } else {
    try {
      batch_out = broadcast_shape(batch_a.empty() ? Shape{1} : batch_a,
                                  batch_b.empty() ? Shape{1} : batch_b);
    } catch (const ShapeError&) {
      throw ShapeError("matmul: incompatible batch extents " + to_string(sa) + " and " +
                       to_string(sb));
    }
  }
  const auto oa = std::make_shared<std::vector<std::size_t>>(
      broadcast_offsets(batch_out, batch_a.empty() ? Shape{1} : batch_a));
  const auto ob = std::make_shared<std::vector<std::size_t>>(
      broadcast_offsets(batch_out, batch_b.empty() ? Shape{1} : batch_b));
  const std::size_t batches = numel(batch_out);

  Shape out_shape = (batch_a.empty() && batch_b.empty()) ? Shape{} : batch_out;
  out_shape.push_back(M);
  out_shape.push_back(N);
  Tensor<T> out(out_shape);
  const auto& av = a.value();
  const auto& bv = b.value();
  // Rank-2 right operand with a batched left operand is one flat product.
  const bool flat = batch_b.empty() || numel(batch_b) == 1;
  if (flat && (batch_a.empty() || numel(batch_a) == batches)) {
    gemm::nn(batches * M, N, K, av.ptr(), bv.ptr(), out.ptr());
  } else {
    for (std::size_t n = 0; n < batches; ++n)
      gemm::nn(M, N, K, av.ptr() + (*oa)[n] * M * K, bv.ptr() + (*ob)[n] * K * N,
               out.ptr() + n * M * N);
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return tape.record(std::move(out), {a, b},
                     [=](Tape<T>& t, std::size_t self) {
                       const auto& g = t.grad_slot(self);
                       const auto& av = t.value(a_id);
                       const auto& bv = t.value(b_id);
                       if (t.requires_grad(a_id)) {
                         auto& ga = t.grad_slot(a_id);
                         for (std::size_t n = 0; n < batches; ++n)
                           gemm::nt(M, N, K, g.ptr() + n * M * N, bv.ptr() + (*ob)[n] * K * N,
                                    ga.ptr() + (*oa)[n] * M * K);
                       }
                       if (t.requires_grad(b_id)) {
                         auto& gb = t.grad_slot(b_id);
                         for (std::size_t n = 0; n < batches; ++n)
                           gemm::tn(M, N, K, av.ptr() + (*oa)[n] * M * K, g.ptr() + n * M * N,
                                    gb.ptr() + (*ob)[n] * K * N);
                       }
                     });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  auto& tape = tape_of(x);
  same_tape(x, w);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sw.size() != 2 || sx.back() != sw[0])
    throw ShapeError("linear: input " + to_string(sx) + " incompatible with weight " +
                     to_string(sw));
  const std::size_t K = sw[0], N = sw[1];
  const std::size_t M = x.value().size() / K;
  if (bias.valid()) {
    same_tape(x, bias);
    if (bias.value().size() != N)
      throw ShapeError("linear: bias " + to_string(bias.shape()) + " for weight " + to_string(sw));
  }
  Shape out_shape = sx;
  out_shape.back() = N;
  Tensor<T> out(out_shape);
  if (bias.valid()) {
    const auto& bv = bias.value();
    for (std::size_t i = 0; i < M; ++i) std::copy(bv.ptr(), bv.ptr() + N, out.ptr() + i * N);
  }
  gemm::nn(M, N, K, x.value().ptr(), w.value().ptr(), out.ptr());
  const std::size_t x_id = x.id(), w_id = w.id();
  const bool has_bias = bias.valid();
  const std::size_t b_id = has_bias ? bias.id() : 0;
  return tape.record(std::move(out), {x, w, bias}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    if (t.requires_grad(x_id))
      gemm::nt(M, N, K, g.ptr(), t.value(w_id).ptr(), t.grad_slot(x_id).ptr());
    if (t.requires_grad(w_id))
      gemm::tn(M, N, K, t.value(x_id).ptr(), g.ptr(), t.grad_slot(w_id).ptr());
    if (has_bias && t.requires_grad(b_id)) {
      auto& gb = t.grad_slot(b_id);
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) gb[j] += g[i * N + j];
    }
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  auto& tape = tape_of(x);
  const Shape& sx = x.shape();
  const std::size_t rank = sx.size();
  if (perm.size() != rank) throw ShapeError("permute: order rank mismatch for " + to_string(sx));
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("permute: invalid axis order for " + to_string(sx));
    seen[p] = true;
  }
  Shape out_shape(rank);
  const auto in_strides = strides_of(sx);
  std::vector<std::size_t> gather_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = sx[perm[i]];
    gather_strides[i] = in_strides[perm[i]];
  }
  // Offset of the source element for every output element.
  auto src = std::make_shared<std::vector<std::size_t>>(numel(out_shape));
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t n = 0; n < src->size(); ++n) {
      (*src)[n] = off;
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        off += gather_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= gather_strides[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = xv[(*src)[n]];
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [x_id, src](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t n = 0; n < g.size(); ++n) gx[(*src)[n]] += g[n];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  auto& tape = tape_of(x);
  Tensor<T> out = x.value().reshaped(shape);
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [x_id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  auto& tape = tape_of(parts.front());
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + to_string(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) ok = false;
    if (!ok) throw ShapeError("concat: shapes " + to_string(s0) + " and " + to_string(s) +
                              " differ off the concat axis");
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Tensor<T> out(out_shape);
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<std::size_t> ids, widths, starts;
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * inner;
    const auto& pv = p.value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(pv.ptr() + o * width, pv.ptr() + (o + 1) * width, out.ptr() + o * out_row + start);
    ids.push_back(p.id());
    widths.push_back(width);
    starts.push_back(start);
    start += width;
  }
  return tape.record(std::move(out), std::span<const Var<T>>(parts),
                     [=](Tape<T>& t, std::size_t self) {
                       const auto& g = t.grad_slot(self);
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (!t.requires_grad(ids[k])) continue;
                         auto& gp = t.grad_slot(ids[k]);
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < widths[k]; ++i)
                             gp[o * widths[k] + i] += g[o * out_row + starts[k] + i];
                       }
                     });
}

template <typename T>
Var<T> concat_last_axis(const Var<T>& a, const Var<T>& b) {
  return concat<T>({a, b}, a.shape().size() - 1);
}

namespace {

// Views `shape` as (outer, extent[axis], inner).
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  auto& tape = tape_of(x);
  const Shape& sx = x.shape();
  if (axis >= sx.size() || length == 0 || start + length > sx[axis])
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") on axis " + std::to_string(axis) + " of " + to_string(sx));
  const AxisView v = axis_view(sx, axis);
  Shape out_shape = sx;
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  const std::size_t in_row = v.extent * v.inner, out_row = length * v.inner;
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy(xv.ptr() + o * in_row + start * v.inner,
              xv.ptr() + o * in_row + (start + length) * v.inner, out.ptr() + o * out_row);
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < out_row; ++i)
        gx[o * in_row + start * v.inner + i] += g[o * out_row + i];
  });
}

template <typename T>
Var<T> pad(const Var<T>& x, std::size_t axis, std::size_t before, std::size_t after) {
  auto& tape = tape_of(x);
  const Shape& sx = x.shape();
  if (axis >= sx.size()) throw ShapeError("pad: axis out of range for " + to_string(sx));
  const AxisView v = axis_view(sx, axis);
  Shape out_shape = sx;
  out_shape[axis] += before + after;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  const std::size_t in_row = v.extent * v.inner, out_row = out_shape[axis] * v.inner;
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy(xv.ptr() + o * in_row, xv.ptr() + (o + 1) * in_row,
              out.ptr() + o * out_row + before * v.inner);
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < in_row; ++i)
        gx[o * in_row + i] += g[o * out_row + before * v.inner + i];
  });
}

template <typename T>
Var<T> softmax_last_axis(const Var<T>& x) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  const std::size_t L = xv.shape().back();
  const std::size_t rows = xv.size() / L;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.ptr() + r * L;
    T* y = out.ptr() + r * L;
    T m = in[0];
    for (std::size_t i = 0; i < L; ++i) {
      if (!std::isfinite(in[i])) throw NumericError("softmax_last_axis: non-finite input");
      m = std::max(m, in[i]);
    }
    T total = 0;
    for (std::size_t i = 0; i < L; ++i) {
      y[i] = std::exp(in[i] - m);
      total += y[i];
    }
    for (std::size_t i = 0; i < L; ++i) y[i] /= total;
  }
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    const auto& y = t.value(self);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * L;
      T dot = 0;
      for (std::size_t i = 0; i < L; ++i) dot += g[base + i] * y[base + i];
      for (std::size_t i = 0; i < L; ++i) gx[base + i] += y[base + i] * (g[base + i] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  auto& tape = tape_of(x);
  same_tape(x, gamma);
  same_tape(x, beta);
  const auto& xv = x.value();
  const std::size_t C = xv.shape().back();
  if (gamma.value().size() != C || beta.value().size() != C)
    throw ShapeError("layer_norm: affine shapes " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " for input " + to_string(xv.shape()));
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = xv.size() / C;
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.ptr() + r * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += in[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<T>(C);
    const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (in[c] - mu) * rs;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = gv[c] * h + bv[c];
    }
  }
  const std::size_t x_id = x.id(), g_id = gamma.id(), b_id = beta.id();
  return tape.record(std::move(out), {x, gamma, beta}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    const auto& gv = t.value(g_id);
    const bool want_x = t.requires_grad(x_id);
    const bool want_g = t.requires_grad(g_id);
    const bool want_b = t.requires_grad(b_id);
    Tensor<T>* gx = want_x ? &t.grad_slot(x_id) : nullptr;
    Tensor<T>* gg = want_g ? &t.grad_slot(g_id) : nullptr;
    Tensor<T>* gb = want_b ? &t.grad_slot(b_id) : nullptr;
    std::vector<T> dh(C);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * C;
      T mean_dh = 0, mean_dh_h = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T gi = g[base + c];
        const T h = (*xhat)[base + c];
        if (gg) (*gg)[c] += gi * h;
        if (gb) (*gb)[c] += gi;
        dh[c] = gi * gv[c];
        mean_dh += dh[c];
        mean_dh_h += dh[c] * h;
      }
      if (!gx) continue;
      mean_dh /= static_cast<T>(C);
      mean_dh_h /= static_cast<T>(C);
      const T rs = (*rstd)[r];
      for (std::size_t c = 0; c < C; ++c)
        (*gx)[base + c] += rs * (dh[c] - mean_dh - (*xhat)[base + c] * mean_dh_h);
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  for (std::size_t i = 0; i < xv.size(); ++i)
    out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [x_id, inv_sqrt2](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    const auto& xv = t.value(x_id);
    auto& gx = t.grad_slot(x_id);
    const T inv_sqrt_2pi = static_cast<T>(0.39894228040143267794);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [x_id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    const auto& y = t.value(self);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  T total = 0;
  for (auto v : xv.data()) total += v;
  const std::size_t x_id = x.id();
  return tape.record(Tensor<T>::scalar(total), {x}, [x_id](Tape<T>& t, std::size_t self) {
    const T g = t.grad_slot(self)[0];
    auto& gx = t.grad_slot(x_id);
    for (auto& v : gx.data()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> norm_last_axis(const Var<T>& x) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  const std::size_t L = xv.shape().back();
  const std::size_t rows = xv.size() / L;
  Tensor<T> out(drop_last(xv.shape()));
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t i = 0; i < L; ++i) s += xv[r * L + i] * xv[r * L + i];
    out[r] = std::sqrt(s);
  }
  const std::size_t x_id = x.id();
  return tape.record(std::move(out), {x}, [x_id, L, rows](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_slot(self);
    const auto& n = t.value(self);
    const auto& xv = t.value(x_id);
    auto& gx = t.grad_slot(x_id);
    for (std::size_t r = 0; r < rows; ++r) {
      if (n[r] == T(0)) continue;  // subgradient 0 at the origin
      const T f = g[r] / n[r];
      for (std::size_t i = 0; i < L; ++i) gx[r * L + i] += f * xv[r * L + i];
    }
  });
}

#define SSRSTF_INSTANTIATE_OPS(T)                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                 \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                     \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                 \
  template Var<T> reshape(const Var<T>&, const Shape&);                                    \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                         \
  template Var<T> concat_last_axis(const Var<T>&, const Var<T>&);                          \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);            \
  template Var<T> pad(const Var<T>&, std::size_t, std::size_t, std::size_t);              \
  template Var<T> softmax_last_axis(const Var<T>&);                                        \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);         \
  template Var<T> gelu(const Var<T>&);                                                     \
  template Var<T> tanh(const Var<T>&);                                                     \
  template Var<T> sum(const Var<T>&);                                                      \
  template Var<T> mean(const Var<T>&);                                                     \
  template Var<T> norm_last_axis(const Var<T>&);

SSRSTF_INSTANTIATE_OPS(float)
SSRSTF_INSTANTIATE_OPS(double)

#undef SSRSTF_INSTANTIATE_OPS

}  // namespace ssrstf
