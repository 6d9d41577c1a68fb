#pragma once

#include <string>

#include "ssrstf/autograd.hpp"
#include "ssrstf/params.hpp"

namespace ssrstf {

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerNormWeights {
  Var<T> gamma;
  Var<T> beta;
};

template <typename T>
struct LinearWeights {
  Var<T> weight;  // (in, out)
  Var<T> bias;    // (out)
};

/// Two-layer perceptron C -> r*C -> C with GELU between the layers.
template <typename T>
struct MlpWeights {
  LinearWeights<T> fc1;
  LinearWeights<T> fc2;
};

// Registration creates initialized parameters under `prefix`; binding looks
// the same names up on a tape.

template <typename T>
void register_layer_norm(ParamSet<T>& params, const std::string& prefix, std::size_t channels);
template <typename T>
void register_linear(ParamSet<T>& params, const std::string& prefix, std::size_t in,
                     std::size_t out, Rng& rng);
template <typename T>
void register_mlp(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                  std::size_t ratio, Rng& rng);

template <typename T>
LayerNormWeights<T> bind_layer_norm(const ParamBinding<T>& b, const std::string& prefix);
template <typename T>
LinearWeights<T> bind_linear(const ParamBinding<T>& b, const std::string& prefix);
template <typename T>
MlpWeights<T> bind_mlp(const ParamBinding<T>& b, const std::string& prefix);

template <typename T>
Var<T> apply(const LinearWeights<T>& w, const Var<T>& x);
template <typename T>
Var<T> apply(const LayerNormWeights<T>& w, const Var<T>& x);
template <typename T>
Var<T> apply(const MlpWeights<T>& w, const Var<T>& x);

/// Z = sigma(MLP(Norm(Y))) + Y when `literal_sigma`, else MLP(Norm(Y)) + Y.
template <typename T>
Var<T> feed_forward(const Var<T>& y, const LayerNormWeights<T>& norm, const MlpWeights<T>& mlp,
                    bool literal_sigma);

}  // namespace ssrstf
