#include "ssrstf/stformer.hpp"

#include <cmath>

#include "ssrstf/ops.hpp"

namespace ssrstf {

template <typename T>
void register_mhsa(ParamSet<T>& params, const std::string& prefix, std::size_t width, Rng& rng) {
  register_linear(params, prefix + ".query", width, width, rng);
  register_linear(params, prefix + ".key", width, width, rng);
  register_linear(params, prefix + ".value", width, width, rng);
  register_linear(params, prefix + ".proj", width, width, rng);
}

template <typename T>
void register_st_block(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                       std::size_t mlp_ratio, Rng& rng) {
  if (channels % 2 != 0)
    throw std::invalid_argument("STFormer needs an even channel count, got " +
                                std::to_string(channels));
  register_layer_norm(params, prefix + ".norm1", channels);
  register_mhsa(params, prefix + ".stc.spatial", channels / 2, rng);
  register_mhsa(params, prefix + ".stc.temporal", channels / 2, rng);
  register_linear(params, prefix + ".stc.mix", channels, channels, rng);
  register_layer_norm(params, prefix + ".norm2", channels);
  register_mlp(params, prefix + ".mlp", channels, mlp_ratio, rng);
}

template <typename T>
MHSAWeights<T> bind_mhsa(const ParamBinding<T>& b, const std::string& prefix, std::size_t heads) {
  MHSAWeights<T> w;
  w.query = bind_linear(b, prefix + ".query");
  w.key = bind_linear(b, prefix + ".key");
  w.value = bind_linear(b, prefix + ".value");
  w.proj = bind_linear(b, prefix + ".proj");
  w.heads = heads;
  return w;
}

template <typename T>
STBlockWeights<T> bind_st_block(const ParamBinding<T>& b, const std::string& prefix,
                                std::size_t heads) {
  STBlockWeights<T> w;
  w.norm1 = bind_layer_norm(b, prefix + ".norm1");
  w.stc.spatial = bind_mhsa(b, prefix + ".stc.spatial", heads);
  w.stc.temporal = bind_mhsa(b, prefix + ".stc.temporal", heads);
  w.stc.mix = bind_linear(b, prefix + ".stc.mix");
  w.norm2 = bind_layer_norm(b, prefix + ".norm2");
  w.mlp = bind_mlp(b, prefix + ".mlp");
  return w;
}

template <typename T>
Var<T> mhsa(const Var<T>& tokens, const MHSAWeights<T>& w) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) throw ShapeError("mhsa: expected (sequences, length, width), got " + to_string(s));
  const std::size_t S = s[0], L = s[1], width = s[2];
  const std::size_t h = w.heads;
  if (h == 0 || width % h != 0)
    throw std::invalid_argument("mhsa: " + std::to_string(h) + " heads do not divide width " +
                                std::to_string(width));
  const std::size_t dk = width / h;
  // (S, L, width) -> (S, h, L, dk)
  auto split_heads = [&](const Var<T>& v) {
    return permute(reshape(v, {S, L, h, dk}), {0, 2, 1, 3});
  };
  auto q = split_heads(apply(w.query, tokens));
  auto k = split_heads(apply(w.key, tokens));
  auto v = split_heads(apply(w.value, tokens));
  auto scores = scale(matmul(q, permute(k, {0, 1, 3, 2})),
                      static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
  auto heads = matmul(softmax_last_axis(scores), v);  // (S, h, L, dk)
  auto merged = reshape(permute(heads, {0, 2, 1, 3}), {S, L, width});
  return apply(w.proj, merged);
}

template <typename T>
Var<T> stc(const Var<T>& x, const STCWeights<T>& w) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("stc: expected a batch x T x J x C grid, got " + to_string(s));
  const std::size_t B = s[0], T_ = s[1], J = s[2], C = s[3];
  if (C % 2 != 0) throw std::invalid_argument("stc: channel count " + std::to_string(C) + " is odd");
  const std::size_t half = C / 2;

  auto spatial_in = reshape(slice(x, 3, 0, half), {B * T_, J, half});
  auto spatial = reshape(mhsa(spatial_in, w.spatial), {B, T_, J, half});

  auto temporal_in = reshape(permute(slice(x, 3, half, half), {0, 2, 1, 3}), {B * J, T_, half});
  auto temporal = permute(reshape(mhsa(temporal_in, w.temporal), {B, J, T_, half}), {0, 2, 1, 3});

  return apply(w.mix, concat_last_axis(spatial, temporal));
}

template <typename T>
Var<T> stformer_block(const Var<T>& x, const STBlockWeights<T>& w, bool literal_sigma) {
  auto y = add(stc(apply(w.norm1, x), w.stc), x);
  return feed_forward(y, w.norm2, w.mlp, literal_sigma);
}

#define SSRSTF_INSTANTIATE_ST(T)                                                                 \
  template void register_mhsa(ParamSet<T>&, const std::string&, std::size_t, Rng&);              \
  template void register_st_block(ParamSet<T>&, const std::string&, std::size_t, std::size_t,   \
                                  Rng&);                                                         \
  template MHSAWeights<T> bind_mhsa(const ParamBinding<T>&, const std::string&, std::size_t);    \
  template STBlockWeights<T> bind_st_block(const ParamBinding<T>&, const std::string&,           \
                                           std::size_t);                                         \
  template Var<T> mhsa(const Var<T>&, const MHSAWeights<T>&);                                    \
  template Var<T> stc(const Var<T>&, const STCWeights<T>&);                                      \
  template Var<T> stformer_block(const Var<T>&, const STBlockWeights<T>&, bool);

SSRSTF_INSTANTIATE_ST(float)
SSRSTF_INSTANTIATE_ST(double)

#undef SSRSTF_INSTANTIATE_ST

}  // namespace ssrstf
