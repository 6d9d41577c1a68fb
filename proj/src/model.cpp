#include "ssrstf/model.hpp"

#include <sstream>
#include <stdexcept>

#include "ssrstf/ops.hpp"

namespace ssrstf {

ModelConfig ModelConfig::base() { return ModelConfig{}; }

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.depth = 16;
  c.channels = 128;
  c.hidden = 512;
  c.heads = 4;
  return c;
}

std::vector<std::string> ModelConfig::problems() const {
  std::vector<std::string> out;
  if (depth < 1) out.push_back("depth must be >= 1");
  if (channels < 2 || channels % 2 != 0) out.push_back("channels must be even and >= 2");
  if (hidden < 1) out.push_back("hidden must be >= 1");
  if (frames < 1) out.push_back("frames must be >= 1");
  if (joints < 2) out.push_back("joints must be >= 2");
  if (mlp_ratio < 1) out.push_back("mlp_ratio must be >= 1");
  if (heads < 1 || (channels % 2 == 0 && (channels / 2) % heads != 0))
    out.push_back("heads must divide channels / 2");
  if (!(lambda_velocity >= 0)) out.push_back("lambda_velocity must be non-negative");
  if (!(output_scale_mm > 0)) out.push_back("output_scale_mm must be positive");
  try {
    kernel.validate();
  } catch (const std::invalid_argument& e) {
    out.push_back(std::string("kernel: ") + e.what());
  }
  return out;
}

void ModelConfig::validate() const {
  auto p = problems();
  if (p.empty()) return;
  std::ostringstream os;
  os << "invalid model config:";
  for (const auto& s : p) os << "\n  - " << s;
  throw std::invalid_argument(os.str());
}

std::string block_prefix(std::size_t index) { return "blocks." + std::to_string(index); }

template <typename T>
ParamSet<T> init_weights(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamSet<T> p;
  const std::size_t C = config.channels;
  register_linear(p, "embed", 3, C, rng);
  p.add("pos_embed", normal_init<T>(rng, {1, config.joints, C}, 0.02), false);
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::string pre = block_prefix(i);
    register_ssr_block(p, pre + ".local.spatial", C, config.kernel, config.mlp_ratio, rng);
    register_ssr_block(p, pre + ".local.temporal", C, config.kernel, config.mlp_ratio, rng);
    register_st_block(p, pre + ".global.0", C, config.mlp_ratio, rng);
    register_st_block(p, pre + ".global.1", C, config.mlp_ratio, rng);
    register_linear(p, pre + ".fusion", 2 * C, 2, rng);
  }
  register_linear(p, "rep", C, config.hidden, rng);
  register_linear(p, "head", config.hidden, 3, rng);
  return p;
}

template <typename T>
void check_weights(const ParamSet<T>& params, const ModelConfig& config) {
  // Reference layout; only names and shapes are compared.
  const ParamSet<T> expected = init_weights<T>(config, 0);
  for (const auto& e : expected) {
    if (!params.contains(e.name))
      throw std::invalid_argument("missing parameter '" + e.name + "'");
    const auto& got = params.at(e.name);
    if (got.shape() != e.value.shape())
      throw std::invalid_argument("parameter '" + e.name + "' has shape " +
                                  to_string(got.shape()) + ", config expects " +
                                  to_string(e.value.shape()));
  }
  for (const auto& p : params)
    if (!expected.contains(p.name))
      throw std::invalid_argument("unexpected parameter '" + p.name + "' for this config");
}

template <typename T>
DualStreamWeights<T> bind_block(const ParamBinding<T>& b, std::size_t index,
                                const ModelConfig& config) {
  const std::string pre = block_prefix(index);
  DualStreamWeights<T> w;
  w.spatial = bind_ssr_block(b, pre + ".local.spatial", config.kernel);
  w.temporal = bind_ssr_block(b, pre + ".local.temporal", config.kernel);
  w.global_first = bind_st_block(b, pre + ".global.0", config.heads);
  w.global_second = bind_st_block(b, pre + ".global.1", config.heads);
  w.fusion = bind_linear(b, pre + ".fusion");
  return w;
}

template <typename T>
Var<T> embed(const Var<T>& x2d, const ParamBinding<T>& b, const ModelConfig& config) {
  const Shape& s = x2d.shape();
  if (s.size() != 4 || s[3] != 3)
    throw ShapeError("embed: expected batch x T x J x 3 input, got " + to_string(s));
  if (s[2] != config.joints)
    throw ShapeError("embed: input has " + std::to_string(s[2]) + " joints, model expects " +
                     std::to_string(config.joints));
  return add(apply(bind_linear(b, "embed"), x2d), b("pos_embed"));
}

template <typename T>
Var<T> fusion_weights(const Var<T>& local, const Var<T>& global, const LinearWeights<T>& fusion) {
  return softmax_last_axis(apply(fusion, concat_last_axis(local, global)));
}

template <typename T>
Var<T> fuse(const Var<T>& local, const Var<T>& global, const LinearWeights<T>& fusion) {
  auto alpha = fusion_weights(local, global, fusion);
  auto alpha_local = slice(alpha, 3, 0, 1);
  auto alpha_global = slice(alpha, 3, 1, 1);
  return add(mul(alpha_local, local), mul(alpha_global, global));
}

template <typename T>
Var<T> dual_stream_block(const Var<T>& f, const DualStreamWeights<T>& w,
                         const ModelConfig& config) {
  auto local = ssrformer_block(f, w.spatial, config.kernel, Orientation::spatial,
                               config.literal_sigma);
  local = ssrformer_block(local, w.temporal, config.kernel, Orientation::temporal,
                          config.literal_sigma);
  auto global = stformer_block(f, w.global_first, config.literal_sigma);
  global = stformer_block(global, w.global_second, config.literal_sigma);
  return fuse(local, global, w.fusion);
}

template <typename T>
ModelOutput<T> forward(const Var<T>& x2d, const ParamBinding<T>& b, const ModelConfig& config) {
  auto f = embed(x2d, b, config);
  for (std::size_t i = 0; i < config.depth; ++i) f = dual_stream_block(f, bind_block(b, i, config), config);
  ModelOutput<T> out;
  out.motion = tanh(apply(bind_linear(b, "rep"), f));
  out.pose = scale(apply(bind_linear(b, "head"), out.motion), static_cast<T>(config.output_scale_mm));
  return out;
}

template <typename T>
Var<T> loss_position(const Var<T>& pred, const Var<T>& gt, LossReduction reduction) {
  if (pred.shape() != gt.shape())
    throw ShapeError("loss_position: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(gt.shape()));
  auto err = norm_last_axis(sub(pred, gt));
  return reduction == LossReduction::sum ? sum(err) : mean(err);
}

template <typename T>
Var<T> loss_velocity(const Var<T>& pred, const Var<T>& gt, LossReduction reduction) {
  if (pred.shape() != gt.shape())
    throw ShapeError("loss_velocity: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(gt.shape()));
  const Shape& s = pred.shape();
  if (s.size() != 4) throw ShapeError("loss_velocity: expected batch x T x J x 3, got " + to_string(s));
  const std::size_t frames = s[1];
  if (frames < 2) return pred.tape()->constant(Tensor<T>::scalar(T(0)));
  auto delta = [frames](const Var<T>& x) {
    return sub(slice(x, 1, 1, frames - 1), slice(x, 1, 0, frames - 1));
  };
  auto err = norm_last_axis(sub(delta(pred), delta(gt)));
  return reduction == LossReduction::sum ? sum(err) : mean(err);
}

template <typename T>
LossTerms<T> loss_total(const Var<T>& pred, const Var<T>& gt, double lambda,
                        LossReduction reduction) {
  if (!(lambda >= 0))
    throw std::invalid_argument("loss_total: velocity coefficient must be non-negative");
  LossTerms<T> terms;
  terms.position = loss_position(pred, gt, reduction);
  terms.velocity = loss_velocity(pred, gt, reduction);
  terms.total = add(terms.position, scale(terms.velocity, static_cast<T>(lambda)));
  return terms;
}

template <typename T>
LossValues values_of(const LossTerms<T>& terms) {
  return {static_cast<double>(terms.position.value()[0]),
          static_cast<double>(terms.velocity.value()[0]),
          static_cast<double>(terms.total.value()[0])};
}

namespace {

std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ModelConfig& config) {
  config.validate();
  const std::size_t C = config.channels;
  const std::size_t norm = 2 * C;
  const std::size_t mlp = linear_count(C, config.mlp_ratio * C) + linear_count(config.mlp_ratio * C, C);
  std::size_t depthwise = C * (config.kernel.long_axis.dw_size() + config.kernel.long_axis.dwd_size());
  if (config.kernel.short_axis)
    depthwise += C * (config.kernel.short_axis->dw_size() + config.kernel.short_axis->dwd_size());
  const std::size_t ssra = depthwise + linear_count(C, C);
  const std::size_t ssr_block = 2 * norm + 2 * linear_count(C, C) + ssra + mlp;
  const std::size_t mhsa = 4 * linear_count(C / 2, C / 2);
  const std::size_t st_block = 2 * norm + 2 * mhsa + linear_count(C, C) + mlp;
  const std::size_t fusion = linear_count(2 * C, 2);
  const std::size_t N = config.depth;
  return {
      {"embedding", linear_count(3, C)},
      {"positional_encoding", config.joints * C},
      {"local_stream", N * 2 * ssr_block},
      {"global_stream", N * 2 * st_block},
      {"fusion", N * fusion},
      {"motion_representation", linear_count(C, config.hidden)},
      {"regression_head", linear_count(config.hidden, 3)},
  };
}

std::size_t param_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& [name, count] : param_breakdown(config)) n += count;
  return n;
}

#define SSRSTF_INSTANTIATE_MODEL(T)                                                           \
  template ParamSet<T> init_weights(const ModelConfig&, std::uint64_t);                       \
  template void check_weights(const ParamSet<T>&, const ModelConfig&);                        \
  template DualStreamWeights<T> bind_block(const ParamBinding<T>&, std::size_t,               \
                                           const ModelConfig&);                               \
  template Var<T> embed(const Var<T>&, const ParamBinding<T>&, const ModelConfig&);           \
  template Var<T> fusion_weights(const Var<T>&, const Var<T>&, const LinearWeights<T>&);      \
  template Var<T> fuse(const Var<T>&, const Var<T>&, const LinearWeights<T>&);                \
  template Var<T> dual_stream_block(const Var<T>&, const DualStreamWeights<T>&,               \
                                    const ModelConfig&);                                      \
  template ModelOutput<T> forward(const Var<T>&, const ParamBinding<T>&, const ModelConfig&); \
  template Var<T> loss_position(const Var<T>&, const Var<T>&, LossReduction);                 \
  template Var<T> loss_velocity(const Var<T>&, const Var<T>&, LossReduction);                 \
  template LossTerms<T> loss_total(const Var<T>&, const Var<T>&, double, LossReduction);      \
  template LossValues values_of(const LossTerms<T>&);

SSRSTF_INSTANTIATE_MODEL(float)
SSRSTF_INSTANTIATE_MODEL(double)

#undef SSRSTF_INSTANTIATE_MODEL

}  // namespace ssrstf
