#include "ssrstf/ssrformer.hpp"

#include "ssrstf/ops.hpp"

namespace ssrstf {

const char* to_string(Orientation o) { return o == Orientation::spatial ? "spatial" : "temporal"; }

GridAxis long_axis_of(Orientation o) {
  return o == Orientation::spatial ? GridAxis::joint : GridAxis::temporal;
}

GridAxis short_axis_of(Orientation o) {
  return o == Orientation::spatial ? GridAxis::temporal : GridAxis::joint;
}

template <typename T>
void register_ssra(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                   const SSRAKernelSpec& spec, Rng& rng) {
  spec.validate();
  auto depthwise = [&](const std::string& name, std::size_t k) {
    params.add(prefix + "." + name, xavier_uniform<T>(rng, {channels, k}, k, k), true);
  };
  depthwise("dw1", spec.long_axis.dw_size());
  depthwise("dwd1", spec.long_axis.dwd_size());
  if (spec.short_axis) {
    depthwise("dw2", spec.short_axis->dw_size());
    depthwise("dwd2", spec.short_axis->dwd_size());
  }
  register_linear(params, prefix + ".attn", channels, channels, rng);
}

template <typename T>
void register_ssr_block(ParamSet<T>& params, const std::string& prefix, std::size_t channels,
                        const SSRAKernelSpec& spec, std::size_t mlp_ratio, Rng& rng) {
  register_layer_norm(params, prefix + ".norm1", channels);
  register_linear(params, prefix + ".pw_in", channels, channels, rng);
  register_ssra(params, prefix + ".ssra", channels, spec, rng);
  register_linear(params, prefix + ".pw_out", channels, channels, rng);
  register_layer_norm(params, prefix + ".norm2", channels);
  register_mlp(params, prefix + ".mlp", channels, mlp_ratio, rng);
}

template <typename T>
SSRAWeights<T> bind_ssra(const ParamBinding<T>& b, const std::string& prefix,
                         const SSRAKernelSpec& spec) {
  SSRAWeights<T> w;
  w.w_dw1 = b(prefix + ".dw1");
  w.w_dwd1 = b(prefix + ".dwd1");
  if (spec.short_axis) {
    w.w_dw2 = b(prefix + ".dw2");
    w.w_dwd2 = b(prefix + ".dwd2");
  }
  w.attn = bind_linear(b, prefix + ".attn");
  return w;
}

template <typename T>
SSRBlockWeights<T> bind_ssr_block(const ParamBinding<T>& b, const std::string& prefix,
                                  const SSRAKernelSpec& spec) {
  SSRBlockWeights<T> w;
  w.norm1 = bind_layer_norm(b, prefix + ".norm1");
  w.pw_in = bind_linear(b, prefix + ".pw_in");
  w.ssra = bind_ssra(b, prefix + ".ssra", spec);
  w.pw_out = bind_linear(b, prefix + ".pw_out");
  w.norm2 = bind_layer_norm(b, prefix + ".norm2");
  w.mlp = bind_mlp(b, prefix + ".mlp");
  return w;
}

template <typename T>
Var<T> ssra_context(const Var<T>& x, const SSRAWeights<T>& w, const SSRAKernelSpec& spec,
                    Orientation o) {
  if (x.shape().size() != 4)
    throw ShapeError("ssra: expected a batch x T x J x C grid, got " + to_string(x.shape()));
  if (spec.short_axis.has_value() != w.w_dw2.valid() ||
      spec.short_axis.has_value() != w.w_dwd2.valid())
    throw std::invalid_argument("ssra: short-axis weights do not match kernel spec " +
                                spec.to_string());
  const std::size_t long_ax = axis_index(long_axis_of(o));
  const std::size_t short_ax = axis_index(short_axis_of(o));
  const std::size_t long_len = x.shape()[long_ax];
  const std::size_t short_len = x.shape()[short_ax];
  const std::size_t long_halo = spec.long_axis.halo();
  const std::size_t short_halo = spec.short_axis ? spec.short_axis->halo() : 0;

  auto y = pad(x, long_ax, long_halo, long_halo);
  if (short_halo) y = pad(y, short_ax, short_halo, short_halo);
  y = depthwise_conv1d(y, w.w_dw1, long_ax, 1);
  if (spec.short_axis) y = depthwise_conv1d(y, w.w_dw2, short_ax, 1);
  y = depthwise_conv1d(y, w.w_dwd1, long_ax, spec.long_axis.d);
  if (spec.short_axis) y = depthwise_conv1d(y, w.w_dwd2, short_ax, spec.short_axis->d);
  y = slice(y, long_ax, long_halo, long_len);
  if (short_halo) y = slice(y, short_ax, short_halo, short_len);
  return y;
}

template <typename T>
Var<T> ssra(const Var<T>& x, const SSRAWeights<T>& w, const SSRAKernelSpec& spec, Orientation o) {
  auto attention = pointwise_conv(ssra_context(x, w, spec, o), w.attn.weight, w.attn.bias);
  return mul(attention, x);
}

template <typename T>
Var<T> ssr_module(const Var<T>& x, const SSRBlockWeights<T>& w, const SSRAKernelSpec& spec,
                  Orientation o) {
  auto h = gelu(pointwise_conv(x, w.pw_in.weight, w.pw_in.bias));
  h = ssra(h, w.ssra, spec, o);
  h = pointwise_conv(h, w.pw_out.weight, w.pw_out.bias);
  return add(x, h);
}

template <typename T>
Var<T> ssrformer_block(const Var<T>& x, const SSRBlockWeights<T>& w, const SSRAKernelSpec& spec,
                       Orientation o, bool literal_sigma) {
  auto y = add(ssr_module(apply(w.norm1, x), w, spec, o), x);
  return feed_forward(y, w.norm2, w.mlp, literal_sigma);
}

#define SSRSTF_INSTANTIATE_SSR(T)                                                             \
  template void register_ssra(ParamSet<T>&, const std::string&, std::size_t,                  \
                              const SSRAKernelSpec&, Rng&);                                   \
  template void register_ssr_block(ParamSet<T>&, const std::string&, std::size_t,             \
                                   const SSRAKernelSpec&, std::size_t, Rng&);                 \
  template SSRAWeights<T> bind_ssra(const ParamBinding<T>&, const std::string&,               \
                                    const SSRAKernelSpec&);                                   \
  template SSRBlockWeights<T> bind_ssr_block(const ParamBinding<T>&, const std::string&,      \
                                             const SSRAKernelSpec&);                          \
  template Var<T> ssra_context(const Var<T>&, const SSRAWeights<T>&, const SSRAKernelSpec&,   \
                               Orientation);                                                  \
  template Var<T> ssra(const Var<T>&, const SSRAWeights<T>&, const SSRAKernelSpec&,           \
                       Orientation);                                                          \
  template Var<T> ssr_module(const Var<T>&, const SSRBlockWeights<T>&, const SSRAKernelSpec&, \
                             Orientation);                                                    \
  template Var<T> ssrformer_block(const Var<T>&, const SSRBlockWeights<T>&,                   \
                                  const SSRAKernelSpec&, Orientation, bool);

SSRSTF_INSTANTIATE_SSR(float)
SSRSTF_INSTANTIATE_SSR(double)

#undef SSRSTF_INSTANTIATE_SSR

}  // namespace ssrstf
