#pragma once

#include <string>

#include "ssrstf/layers.hpp"

namespace ssrstf {

template <typename T>
struct MHSAWeights {
  LinearWeights<T> query;
  LinearWeights<T> key;
  LinearWeights<T> value;
  LinearWeights<T> proj;  // W_P
  std::size_t heads = 1;
};

/// Spatio-temporal criss-cross attention: the first half of the channels
/// attends over joints within each frame, the second half over frames for
/// each joint; the halves are concatenated and mixed by a C x C projection.
template <typename T>
struct STCWeights {
  MHSAWeights<T> spatial;
  MHSAWeights<T> temporal;
  LinearWeights<T> mix;
};

template <typename T>
struct STBlockWeights {
  STCWeights<T> stc;
  LayerNormWeights<T> norm1;
  LayerNormWeights<T> norm2;
  MlpWeights<T> mlp;
};

template <typename T>
void register_mhsa(ParamSet<T>& params, const std::string& prefix, std::size_t width, Rng& rng);
template <typename T>
void register_st_block(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                       std::size_t mlp_ratio, Rng& rng);

template <typename T>
MHSAWeights<T> bind_mhsa(const ParamBinding<T>& b, const std::string& prefix, std::size_t heads);
template <typename T>
STBlockWeights<T> bind_st_block(const ParamBinding<T>& b, const std::string& prefix,
                                std::size_t heads);

/// Multi-head self-attention over sequences (S, L, width):
/// concat_i softmax(Q_i K_i^T / sqrt(d_K)) V_i, then W_P.
template <typename T>
Var<T> mhsa(const Var<T>& tokens, const MHSAWeights<T>& w);

template <typename T>
Var<T> stc(const Var<T>& x, const STCWeights<T>& w);

/// Y = STC(Norm(X)) + X, then Z = sigma(MLP(Norm(Y))) + Y.
template <typename T>
Var<T> stformer_block(const Var<T>& x, const STBlockWeights<T>& w, bool literal_sigma = true);

}  // namespace ssrstf
