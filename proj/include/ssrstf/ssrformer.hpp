#pragma once

#include <string>

#include "ssrstf/conv.hpp"
#include "ssrstf/layers.hpp"

namespace ssrstf {

/// Spatial places the long (k1) kernel axis along joints, temporal along frames.
enum class Orientation { spatial, temporal };

const char* to_string(Orientation o);

/// Axis of a batch x T x J x C grid that carries the long / short kernel.
GridAxis long_axis_of(Orientation o);
GridAxis short_axis_of(Orientation o);

/// Depth-wise factors of the irregular large kernel plus the pointwise map
/// producing the attention map. Short-axis factors are unbound when the spec
/// has no short axis.
template <typename T>
struct SSRAWeights {
  Var<T> w_dw1;   // (C, 2 d1 - 1), long axis
  Var<T> w_dwd1;  // (C, floor(k1 / d1)), long axis, dilation d1
  Var<T> w_dw2;   // (C, 2 d2 - 1), short axis
  Var<T> w_dwd2;  // (C, floor(k2 / d2)), short axis, dilation d2
  LinearWeights<T> attn;
};

template <typename T>
struct SSRBlockWeights {
  SSRAWeights<T> ssra;
  LinearWeights<T> pw_in;
  LinearWeights<T> pw_out;
  LayerNormWeights<T> norm1;
  LayerNormWeights<T> norm2;
  MlpWeights<T> mlp;
};

template <typename T>
void register_ssra(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                   const SSRAKernelSpec& spec, Rng& rng);
template <typename T>
void register_ssr_block(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                        const SSRAKernelSpec& spec, std::size_t mlp_ratio, Rng& rng);

template <typename T>
SSRAWeights<T> bind_ssra(const ParamBinding<T>& b, const std::string& prefix,
                         const SSRAKernelSpec& spec);
template <typename T>
SSRBlockWeights<T> bind_ssr_block(const ParamBinding<T>& b, const std::string& prefix,
                                  const SSRAKernelSpec& spec);

/// X_bar = DWD2(DWD1(DW2(DW1(X)))): the depth-wise context of SSRA before the
/// pointwise map. Zero padding is applied once around the whole cascade, so
/// X_bar is exactly the zero-padded dense k1 x k2 depth-wise convolution.
template <typename T>
Var<T> ssra_context(const Var<T>& x, const SSRAWeights<T>& w, const SSRAKernelSpec& spec,
                    Orientation o);

/// f_SSRA(X) = PWConv(X_bar) * X (Hadamard).
template <typename T>
Var<T> ssra(const Var<T>& x, const SSRAWeights<T>& w, const SSRAKernelSpec& spec, Orientation o);

/// SSR(X) = X + PWConv(f_SSRA(GELU(PWConv(X)))).
template <typename T>
Var<T> ssr_module(const Var<T>& x, const SSRBlockWeights<T>& w, const SSRAKernelSpec& spec,
                  Orientation o);

/// Y = SSR(Norm(X)) + X, then Z = sigma(MLP(Norm(Y))) + Y.
template <typename T>
Var<T> ssrformer_block(const Var<T>& x, const SSRBlockWeights<T>& w, const SSRAKernelSpec& spec,
                       Orientation o, bool literal_sigma = true);

}  // namespace ssrstf
