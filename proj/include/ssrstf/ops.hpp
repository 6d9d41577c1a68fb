#pragma once

#include <cstddef>
#include <vector>

#include "ssrstf/autograd.hpp"
#include "ssrstf/tensor.hpp"

// Differentiable primitives. Every function records its result on the tape of
// its first operand; all operands must share that tape.

namespace ssrstf {

/// Right-aligned (numpy-style) broadcast of two shapes; throws ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Elementwise with broadcasting.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
/// Hadamard product.
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// x[..., in] * w[in, out] + bias[out]. `bias` may be an invalid Var.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);
template <typename T> Var<T> reshape(const Var<T>& x, const Shape& shape);

template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> concat_last_axis(const Var<T>& a, const Var<T>& b);
/// Sub-range [start, start + length) of `axis`.
template <typename T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);
/// Zero padding of `axis` by `before`/`after` elements.
template <typename T> Var<T> pad(const Var<T>& x, std::size_t axis, std::size_t before, std::size_t after);

/// Max-subtracted softmax over the last axis; NumericError on non-finite input.
template <typename T> Var<T> softmax_last_axis(const Var<T>& x);
/// Normalizes each last-axis slice to zero mean / unit variance, then gamma * x + beta.
template <typename T> Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);
/// Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// Euclidean norm of each last-axis slice; the last axis is dropped (kept as 1 for rank-1 input).
template <typename T> Var<T> norm_last_axis(const Var<T>& x);

}  // namespace ssrstf
