#include "ssrstf/layers.hpp"

#include "ssrstf/ops.hpp"

namespace ssrstf {

template <typename T>
void register_layer_norm(ParamSet<T>& params, const std::string& prefix, std::size_t channels) {
  params.add(prefix + ".gamma", Tensor<T>::ones({channels}), false);
  params.add(prefix + ".beta", Tensor<T>::zeros({channels}), false);
}

template <typename T>
void register_linear(ParamSet<T>& params, const std::string& prefix, std::size_t in,
                     std::size_t out, Rng& rng) {
  params.add(prefix + ".weight", xavier_uniform<T>(rng, {in, out}, in, out), true);
  params.add(prefix + ".bias", Tensor<T>::zeros({out}), false);
}

template <typename T>
void register_mlp(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                  std::size_t ratio, Rng& rng) {
  register_linear(params, prefix + ".fc1", channels, channels * ratio, rng);
  register_linear(params, prefix + ".fc2", channels * ratio, channels, rng);
}

template <typename T>
LayerNormWeights<T> bind_layer_norm(const ParamBinding<T>& b, const std::string& prefix) {
  return {b(prefix + ".gamma"), b(prefix + ".beta")};
}

template <typename T>
LinearWeights<T> bind_linear(const ParamBinding<T>& b, const std::string& prefix) {
  return {b(prefix + ".weight"), b(prefix + ".bias")};
}

template <typename T>
MlpWeights<T> bind_mlp(const ParamBinding<T>& b, const std::string& prefix) {
  return {bind_linear(b, prefix + ".fc1"), bind_linear(b, prefix + ".fc2")};
}

template <typename T>
Var<T> apply(const LinearWeights<T>& w, const Var<T>& x) {
  return linear(x, w.weight, w.bias);
}

template <typename T>
Var<T> apply(const LayerNormWeights<T>& w, const Var<T>& x) {
  return layer_norm(x, w.gamma, w.beta, kLayerNormEps);
}

template <typename T>
Var<T> apply(const MlpWeights<T>& w, const Var<T>& x) {
  return apply(w.fc2, gelu(apply(w.fc1, x)));
}

template <typename T>
Var<T> feed_forward(const Var<T>& y, const LayerNormWeights<T>& norm, const MlpWeights<T>& mlp,
                    bool literal_sigma) {
  auto branch = apply(mlp, apply(norm, y));
  if (literal_sigma) branch = gelu(branch);
  return add(branch, y);
}

#define SSRSTF_INSTANTIATE_LAYERS(T)                                                          \
  template void register_layer_norm(ParamSet<T>&, const std::string&, std::size_t);          \
  template void register_linear(ParamSet<T>&, const std::string&, std::size_t, std::size_t,  \
                                Rng&);                                                       \
  template void register_mlp(ParamSet<T>&, const std::string&, std::size_t, std::size_t,     \
                             Rng&);                                                          \
  template LayerNormWeights<T> bind_layer_norm(const ParamBinding<T>&, const std::string&);  \
  template LinearWeights<T> bind_linear(const ParamBinding<T>&, const std::string&);         \
  template MlpWeights<T> bind_mlp(const ParamBinding<T>&, const std::string&);               \
  template Var<T> apply(const LinearWeights<T>&, const Var<T>&);                             \
  template Var<T> apply(const LayerNormWeights<T>&, const Var<T>&);                          \
  template Var<T> apply(const MlpWeights<T>&, const Var<T>&);                                \
  template Var<T> feed_forward(const Var<T>&, const LayerNormWeights<T>&,                    \
                               const MlpWeights<T>&, bool);

SSRSTF_INSTANTIATE_LAYERS(float)
SSRSTF_INSTANTIATE_LAYERS(double)

#undef SSRSTF_INSTANTIATE_LAYERS

}  // namespace ssrstf
