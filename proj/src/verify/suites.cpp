#include "ssrstf/verify/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "ssrstf/conv.hpp"
#include "ssrstf/data.hpp"
#include "ssrstf/metrics.hpp"
#include "ssrstf/model.hpp"
#include "ssrstf/ops.hpp"
#include "ssrstf/ssrformer.hpp"
#include "ssrstf/stformer.hpp"
#include "ssrstf/trainer.hpp"
#include "ssrstf/verify/gradcheck.hpp"
#include "ssrstf/verify/oracles.hpp"

namespace ssrstf::verify {

namespace {

namespace fs = std::filesystem;
using Vars = std::vector<Var<double>>;

CheckResult make(double measured, double limit, bool passed, std::string detail = {}) {
  CheckResult r;
  r.measured = measured;
  r.limit = limit;
  r.passed = passed;
  r.detail = std::move(detail);
  return r;
}

// Collects several gradient checks into one result, remembering the worst.
struct GradTally {
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  bool passed = true;

  void add(const std::string& what, const LossFn& fn, const std::vector<Tensor<double>>& inputs,
           const GradCheckOptions& opts = {}) {
    const auto r = check_gradients(fn, inputs, opts);
    checked += r.checked;
    passed = passed && r.passed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = what + " " + r.worst;
    }
  }

  CheckResult result() const {
    return make(worst, GradCheckOptions{}.tolerance, passed,
                std::to_string(checked) + " elements, worst " + where);
  }
};

Var<double> squared_sum(const Var<double>& y) { return sum(mul(y, y)); }

template <typename T>
std::vector<Tensor<T>> tensors_of(const ParamSet<T>& p) {
  std::vector<Tensor<T>> out;
  for (const auto& q : p) out.push_back(q.value);
  return out;
}

template <typename T>
void randomize(ParamSet<T>& p, Rng& rng, double lo = -0.5, double hi = 0.5) {
  for (auto& q : p) q.value = random_tensor<T>(rng, q.value.shape(), lo, hi);
}

// Gradient suite.

CheckResult grad_primitives(const SuiteOptions& o) {
  Rng rng(o.seed);
  auto r = [&](Shape s) { return random_tensor<double>(rng, std::move(s)); };
  GradTally g;
  g.add("matmul", [](Tape<double>&, const Vars& v) { return squared_sum(matmul(v[0], v[1])); },
        {r({2, 3, 4}), r({4, 5})});
  g.add("linear", [](Tape<double>&, const Vars& v) { return squared_sum(linear(v[0], v[1], v[2])); },
        {r({2, 3, 4}), r({4, 6}), r({6})});
  g.add("broadcast arithmetic",
        [](Tape<double>&, const Vars& v) {
          return squared_sum(sub(mul(add(v[0], v[1]), v[2]), scale(v[0], 0.7)));
        },
        {r({2, 3, 4}), r({4}), r({3, 1})});
  g.add("permute/reshape",
        [](Tape<double>& t, const Vars& v) {
          auto y = reshape(permute(v[0], {2, 0, 1}), Shape{4, 6});
          return sum(mul(y, t.constant(Tensor<double>({4, 6}, 0.3))));
        },
        {r({2, 3, 4})});
  g.add("concat/slice/pad",
        [](Tape<double>&, const Vars& v) {
          auto c = concat<double>({v[0], v[1]}, 1);
          return squared_sum(pad(slice(c, 1, 1, 3), 2, 1, 2));
        },
        {r({2, 2, 3}), r({2, 3, 3})});
  g.add("softmax",
        [](Tape<double>&, const Vars& v) { return sum(mul(softmax_last_axis(v[0]), v[1])); },
        {r({3, 5}), r({3, 5})});
  g.add("layer_norm",
        [](Tape<double>&, const Vars& v) { return squared_sum(layer_norm(v[0], v[1], v[2])); },
        {r({2, 3, 6}), r({6}), r({6})});
  g.add("gelu/tanh", [](Tape<double>&, const Vars& v) { return squared_sum(tanh(gelu(v[0]))); },
        {random_tensor<double>(rng, {4, 5}, -3, 3)});
  g.add("norm/mean", [](Tape<double>&, const Vars& v) { return mean(norm_last_axis(v[0])); },
        {r({4, 3})});
  return g.result();
}

CheckResult grad_conv(const SuiteOptions& o) {
  Rng rng(o.seed + 1);
  auto r = [&](Shape s) { return random_tensor<double>(rng, std::move(s)); };
  GradTally g;
  for (std::size_t axis : {1u, 2u})
    g.add("depthwise axis " + std::to_string(axis),
          [axis](Tape<double>&, const Vars& v) { return squared_sum(depthwise_conv1d(v[0], v[1], axis, 2)); },
          {r({1, 7, 6, 2}), r({2, 5})});
  g.add("cascade",
        [](Tape<double>&, const Vars& v) { return squared_sum(cascade_conv1d(v[0], v[1], v[2], 2, 1)); },
        {r({1, 9, 4, 2}), r({2, 3}), r({2, 5})});
  g.add("pointwise",
        [](Tape<double>&, const Vars& v) { return squared_sum(pointwise_conv(v[0], v[1], v[2])); },
        {r({1, 3, 4, 5}), r({5, 3}), r({3})});
  return g.result();
}

CheckResult grad_blocks(const SuiteOptions& o) {
  Rng rng(o.seed + 2);
  GradTally g;
  const GradCheckOptions opts;
  const SSRAKernelSpec specs[] = {{{7, 2}, AxisKernel{3, 1}}, {{11, 2}, std::nullopt}};
  for (const auto& spec : specs)
    for (Orientation orient : {Orientation::spatial, Orientation::temporal}) {
      ParamSet<double> p;
      register_ssr_block(p, "b", 4, spec, 2, rng);
      randomize(p, rng);
      auto inputs = tensors_of(p);
      inputs.push_back(random_tensor<double>(rng, {1, 5, 6, 4}));
      g.add(std::string("ssrformer block ") + to_string(orient) + " " + spec.to_string(),
            [&p, spec, orient](Tape<double>&, const Vars& v) {
              ParamBinding<double> b(p, Vars(v.begin(), v.end() - 1));
              return squared_sum(ssrformer_block(v.back(), bind_ssr_block(b, "b", spec), spec, orient));
            },
            inputs, opts);
    }
  ParamSet<double> p;
  register_st_block(p, "st", 4, 2, rng);
  randomize(p, rng);
  auto inputs = tensors_of(p);
  inputs.push_back(random_tensor<double>(rng, {1, 4, 5, 4}));
  g.add("stformer block",
        [&p](Tape<double>&, const Vars& v) {
          ParamBinding<double> b(p, Vars(v.begin(), v.end() - 1));
          return squared_sum(stformer_block(v.back(), bind_st_block(b, "st", 2)));
        },
        inputs, opts);
  g.add("fusion",
        [](Tape<double>&, const Vars& v) {
          return squared_sum(fuse(v[0], v[1], LinearWeights<double>{v[2], v[3]}));
        },
        {random_tensor<double>(rng, {1, 2, 3, 4}), random_tensor<double>(rng, {1, 2, 3, 4}),
         random_tensor<double>(rng, {8, 2}), random_tensor<double>(rng, {2})});
  for (LossReduction red : {LossReduction::mean, LossReduction::sum})
    g.add(red == LossReduction::mean ? "loss mean" : "loss sum",
          [red](Tape<double>&, const Vars& v) { return loss_total(v[0], v[1], 0.5, red).total; },
          {random_tensor<double>(rng, {2, 4, 3, 3}), random_tensor<double>(rng, {2, 4, 3, 3})});
  return g.result();
}

// N=1, C=8, C_h=8, T=4, J=5, h=2 in double, a few samples from every tensor.
CheckResult grad_model(const SuiteOptions& o) {
  ModelConfig c;
  c.depth = 1;
  c.channels = 8;
  c.hidden = 8;
  c.frames = 4;
  c.joints = 5;
  c.heads = 2;
  c.kernel = SSRAKernelSpec{{7, 2}, AxisKernel{3, 1}};
  c.output_scale_mm = 1;
  auto p = init_weights<double>(c, o.seed);
  Rng rng(o.seed + 3);
  // zero-initialized biases and unit gains would hide some paths
  for (auto& q : p)
    if (!q.decay) q.value = random_tensor<double>(rng, q.value.shape(), -0.3, 0.3);
  auto inputs = tensors_of(p);
  inputs.push_back(random_tensor<double>(rng, {1, 4, 5, 3}));
  const auto target = random_tensor<double>(rng, {1, 4, 5, 3});
  GradCheckOptions opts;
  opts.samples_per_input = 4;
  opts.seed = o.seed;
  const auto r = check_gradients(
      [&](Tape<double>& t, const Vars& v) {
        ParamBinding<double> b(p, Vars(v.begin(), v.end() - 1));
        auto out = forward(v.back(), b, c);
        return loss_total(out.pose, t.constant(target), 1.0, LossReduction::mean).total;
      },
      inputs, opts);
  const bool enough = r.checked >= 200;
  return make(r.max_rel_error, opts.tolerance, r.passed && enough,
              std::to_string(r.checked) + " sampled elements over " + std::to_string(p.size()) +
                  " parameter tensors and the input, worst " + r.worst);
}

// Equivalence suite.

template <typename T>
double cascade_deviation(const SuiteOptions& o, std::string& worst) {
  Rng rng(o.seed + 10);
  double dev = 0;
  for (const auto& spec : reference_kernel_specs())
    for (std::size_t axis : {1u, 2u}) {
      const auto& a = spec.long_axis;
      auto x = random_tensor<T>(rng, {2, 16, 11, 8});
      auto w1 = random_tensor<T>(rng, {8, a.dw_size()});
      auto w2 = random_tensor<T>(rng, {8, a.dwd_size()});
      auto dense_kernel = compose_dense_kernel(w1, w2, a.d);
      if (o.tamper) dense_kernel.at({3, dense_kernel.extent(1) / 2}) += T(1e-2);
      Tape<T> tape(false);
      auto cascade = cascade_conv1d(tape.constant(x), tape.constant(w1), tape.constant(w2), a.d, axis);
      auto dense = depthwise_conv1d(tape.constant(x), tape.constant(dense_kernel), axis, 1);
      const double d = max_abs_diff(cascade.value(), dense.value());
      if (d >= dev) {
        dev = d;
        worst = spec.to_string() + (axis == 1 ? " along frames" : " along joints");
      }
    }
  return dev;
}

CheckResult equiv_cascade(const SuiteOptions& o) {
  std::string worst;
  const double limit = o.f64 ? 1e-10 : 1e-4;
  const double dev = o.f64 ? cascade_deviation<double>(o, worst) : cascade_deviation<float>(o, worst);
  return make(dev, limit, dev <= limit,
              std::string(o.f64 ? "64-bit" : "32-bit") + (o.tamper ? ", tampered kernels" : "") +
                  ", worst " + worst);
}

CheckResult equiv_tamper_detected(const SuiteOptions& o) {
  SuiteOptions t = o;
  t.tamper = true;
  std::string worst;
  const double dev = cascade_deviation<float>(t, worst);
  // the tampered comparison has to exceed the bound it would otherwise meet
  return make(dev, 1e-4, dev > 1e-4, "deviation with one perturbed tap per kernel");
}

CheckResult equiv_oracles(const SuiteOptions& o) {
  Rng rng(o.seed + 11);
  double dev = 0;
  std::string worst;
  auto note = [&](double d, const std::string& what) {
    if (d >= dev) {
      dev = d;
      worst = what;
    }
  };
  for (const auto& spec : reference_kernel_specs()) {
    const auto& a = spec.long_axis;
    auto w1 = random_tensor<double>(rng, {3, a.dw_size()});
    auto w2 = random_tensor<double>(rng, {3, a.dwd_size()});
    auto dense = compose_dense_kernel(w1, w2, a.d);
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> r1(w1.data().begin() + c * w1.extent(1), w1.data().begin() + (c + 1) * w1.extent(1));
      std::vector<double> r2(w2.data().begin() + c * w2.extent(1), w2.data().begin() + (c + 1) * w2.extent(1));
      auto ref = polynomial_kernel_product(r1, r2, a.d);
      if (ref.size() != dense.extent(1)) return make(1, 0, false, "composed length " + spec.to_string());
      for (std::size_t k = 0; k < ref.size(); ++k)
        note(std::abs(ref[k] - dense.at({c, k})), "composed kernel " + spec.to_string());
    }
  }
  for (std::size_t axis : {1u, 2u}) {
    auto x = random_tensor<double>(rng, {2, 7, 6, 3});
    auto w = random_tensor<double>(rng, {3, 5});
    Tape<double> tape(false);
    auto y = depthwise_conv1d(tape.constant(x), tape.constant(w), axis, 2).value();
    note(max_abs_diff(y, depthwise_grid_direct(x, w, axis, 2)), "depthwise conv");
  }
  {
    auto a = random_tensor<double>(rng, {13, 37});
    auto b = random_tensor<double>(rng, {37, 41});
    Tape<double> tape(false);
    note(max_abs_diff(matmul(tape.constant(a), tape.constant(b)).value(), matmul_triple_loop(a, b)),
         "matmul");
    auto x = random_tensor<double>(rng, {2, 3, 4, 5});
    auto w = random_tensor<double>(rng, {5, 6});
    auto y = pointwise_conv(tape.constant(x), tape.constant(w), tape.constant(Tensor<double>({6}))).value();
    note(max_abs_diff(y.reshaped({24, 6}), matmul_triple_loop(x.reshaped({24, 5}), w)), "pointwise conv");
  }
  {
    auto logits = random_tensor<double>(rng, {4, 9}, -5, 5);
    Tape<double> tape(false);
    auto s = softmax_last_axis(tape.constant(logits)).value();
    for (std::size_t r = 0; r < 4; ++r) {
      auto ref = softmax_direct(std::vector<double>(logits.data().begin() + 9 * r, logits.data().begin() + 9 * (r + 1)));
      for (std::size_t k = 0; k < 9; ++k) note(std::abs(ref[k] - s[9 * r + k]), "softmax");
    }
    auto g = gelu(tape.constant(logits)).value();
    for (std::size_t i = 0; i < logits.size(); ++i) note(std::abs(gelu_erf(logits[i]) - g[i]), "gelu");
  }
  return make(dev, 1e-10, dev <= 1e-10, "worst " + worst);
}

CheckResult equiv_extents(const SuiteOptions&) {
  const std::pair<std::size_t, std::size_t> expected[] = {{35, 35}, {35, 11}, {23, 7}, {11, 11}, {11, 1}};
  const auto& specs = reference_kernel_specs();
  if (specs.size() != std::size(expected)) return make(0, 0, false, "expected five kernel specs");
  std::size_t mismatches = 0;
  std::string labels;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::size_t e1 = effective_extent(s.long_axis.k, s.long_axis.d);
    const std::size_t e2 = s.short_axis ? effective_extent(s.short_axis->k, s.short_axis->d) : 1;
    // the composed kernel's length must agree with the formula
    const std::size_t composed = s.long_axis.dw_size() + s.long_axis.d * (s.long_axis.dwd_size() - 1);
    if (e1 != expected[i].first || e2 != expected[i].second || composed != e1) ++mismatches;
    labels += (i ? " " : "") + std::to_string(e1) + "x" + std::to_string(e2);
  }
  return make(double(mismatches), 0, mismatches == 0, labels);
}

CheckResult equiv_locality(const SuiteOptions& o) {
  const SSRAKernelSpec spec{{11, 2}, std::nullopt};
  Rng rng(o.seed + 12);
  ParamSet<double> p;
  register_ssra(p, "a", 4, spec, rng);
  randomize(p, rng);
  const std::size_t frames = 3, joints = 17, pt = 1, pj = 8;
  auto x = random_tensor<double>(rng, {1, frames, joints, 4});
  auto context = [&](const Tensor<double>& in) {
    Tape<double> tape(false);
    ParamBinding<double> b(tape, p);
    return ssra_context(tape.constant(in), bind_ssra(b, "a", spec), spec, Orientation::spatial).value();
  };
  const auto base = context(x);
  double outside = 0, at_edge = 0;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < joints; ++j) {
      const std::size_t off = j > pj ? j - pj : pj - j;
      const bool inside = t == pt && off <= 5;
      if (inside && off != 5) continue;
      auto x2 = x;
      for (std::size_t c = 0; c < 4; ++c) x2.at({0, t, j, c}) += 3.0;
      const auto y = context(x2);
      double d = 0;
      for (std::size_t c = 0; c < 4; ++c) d = std::max(d, std::abs(y.at({0, pt, pj, c}) - base.at({0, pt, pj, c})));
      if (inside)
        at_edge = std::max(at_edge, d);
      else
        outside = std::max(outside, d);
    }
  // offset 5 is inside the 11-wide field, so it must still be felt
  return make(outside, 0, outside == 0 && at_edge > 0,
              "max change beyond offset 5: " + std::to_string(outside) +
                  ", at offset 5: " + std::to_string(at_edge));
}

CheckResult equiv_fusion(const SuiteOptions& o) {
  Rng rng(o.seed + 13);
  double dev = 0;
  for (int draw = 0; draw < 100; ++draw) {
    Tape<float> tape(false);
    auto l = tape.constant(random_tensor<float>(rng, {2, 3, 5, 4}, -3, 3));
    auto g = tape.constant(random_tensor<float>(rng, {2, 3, 5, 4}, -3, 3));
    LinearWeights<float> w{tape.constant(random_tensor<float>(rng, {8, 2}, -2, 2)),
                           tape.constant(random_tensor<float>(rng, {2}, -2, 2))};
    const auto a = fusion_weights(l, g, w).value();
    for (std::size_t i = 0; i < a.size(); i += 2)
      dev = std::max(dev, std::abs(double(a[i]) + double(a[i + 1]) - 1.0));
  }
  return make(dev, 1e-6, dev <= 1e-6, "100 draws, max |alpha_L + alpha_G - 1|");
}

CheckResult equiv_census(const SuiteOptions&) {
  const double base = param_count(ModelConfig::base()) / 1e6;
  const double small = param_count(ModelConfig::small()) / 1e6;
  const double dev = std::max(std::abs(base / 36.7 - 1), std::abs(small / 12.4 - 1));
  bool linear = true;
  for (auto c : {ModelConfig::base(), ModelConfig::small()}) {
    std::vector<std::size_t> counts;
    for (std::size_t n = 1; n <= 4; ++n) {
      c.depth = n;
      counts.push_back(param_count(c));
    }
    for (std::size_t n = 2; n < counts.size(); ++n)
      linear = linear && counts[n] - counts[n - 1] == counts[1] - counts[0];
  }
  std::ostringstream d;
  d << "base " << base << " M, small " << small << " M, " << (linear ? "linear" : "not linear")
    << " in depth";
  return make(dev, 0.15, dev <= 0.15 && linear, d.str());
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

CheckResult equiv_round_trips(const SuiteOptions& o) {
  const fs::path dir = fs::temp_directory_path() /
                       ("ssrstf_verify_" + std::to_string(o.seed) + "_" +
                        std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path d;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(d, ec);
    }
  } cleanup{dir};

  std::size_t failures = 0;
  std::string what;
  auto fail = [&](const std::string& m) {
    ++failures;
    what += (what.empty() ? "" : "; ") + m;
  };

  auto rig = data::SyntheticRigConfig::h36m();
  rig.seed = o.seed;
  const auto pairs = data::generate_synthetic(rig, 2, 9);
  for (const auto& pair : pairs)
    for (const auto* clip : {&pair.input, &pair.target}) {
      const auto bytes = data::encode_clip(*clip);
      const auto back = data::decode_clip(bytes);
      if (data::encode_clip(back) != bytes || back.values.size() != clip->values.size() ||
          !std::equal(back.values.begin(), back.values.end(), clip->values.begin(),
                      [](float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }))
        fail("clip " + clip->id);
      const fs::path path = dir / (clip->id + (clip->kind == data::PoseKind::pose2d ? ".2d" : ".3d") + ".pseq");
      data::save_clip(*clip, path);
      if (read_bytes(path) != bytes) fail("saved clip " + clip->id);
    }

  Checkpoint ckpt;
  ckpt.config.preset = "custom";
  ckpt.config.model.depth = 1;
  ckpt.config.model.channels = 8;
  ckpt.config.model.hidden = 8;
  ckpt.config.model.frames = 4;
  ckpt.config.model.joints = 17;
  ckpt.config.model.heads = 2;
  ckpt.config.model.kernel = SSRAKernelSpec{{7, 2}, AxisKernel{3, 1}};
  ckpt.params = init_weights<float>(ckpt.config.model, o.seed);
  Rng rng(o.seed + 14);
  auto state = AdamWState<float>::zeros_like(ckpt.params);
  for (auto& m : state.m) m = random_tensor<float>(rng, m.shape());
  for (auto& v : state.v) v = random_tensor<float>(rng, v.shape(), 0, 1e-3);
  state.step = 37;
  ckpt.optimizer = state;
  ckpt.progress = {2, 3, 37, 1.25, 0.5, 1.75};
  const fs::path first = dir / "a.ssrw", second = dir / "b.ssrw";
  save_checkpoint(ckpt, first);
  const auto loaded = load_checkpoint(first);
  save_checkpoint(loaded, second);
  if (read_bytes(first) != read_bytes(second)) fail("checkpoint resave differs");
  if (!(loaded.config == ckpt.config) || !(loaded.progress == ckpt.progress)) fail("checkpoint header");
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    if (loaded.params[i].name != ckpt.params[i].name ||
        std::memcmp(loaded.params[i].value.data().data(), ckpt.params[i].value.data().data(),
                    ckpt.params[i].value.size() * sizeof(float)) != 0)
      fail("tensor " + ckpt.params[i].name);
  if (!loaded.optimizer || loaded.optimizer->step != state.step) fail("optimizer step");

  return make(double(failures), 0, failures == 0,
              failures ? what : "clip encode/decode/save and checkpoint save/load/save are bit-identical");
}

// Metrics suite.

metrics::Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  double q[4], len = 0;
  for (auto& v : q) {
    v = n(rng);
    len += v * v;
  }
  len = std::sqrt(len);
  for (auto& v : q) v /= len;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {metrics::Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
          metrics::Vec3{2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
          metrics::Vec3{2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

Tensor<double> synthetic_poses(std::uint64_t seed, std::size_t clips, std::size_t frames) {
  auto rig = data::SyntheticRigConfig::h36m();
  rig.seed = seed;
  const auto pairs = data::generate_synthetic(rig, clips, frames);
  Tensor<double> out({clips, frames, 17, 3});
  for (std::size_t c = 0; c < clips; ++c) {
    const auto t = pairs[c].target.tensor();
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + c * t.size());
  }
  return out;
}

CheckResult metrics_procrustes_invariance(const SuiteOptions& o) {
  Rng rng(o.seed + 20);
  const auto gt = synthetic_poses(o.seed, 4, 12);
  std::uniform_real_distribution<double> scale(0.5, 2.0), shift(-1000, 1000);
  double worst = 0;
  for (std::size_t p = 0; p < metrics::pose_count(gt); ++p) {
    const auto pose = metrics::pose_at(gt, p);
    metrics::Vec3 centroid{};
    for (const auto& q : pose)
      for (int a = 0; a < 3; ++a) centroid[a] += q[a] / pose.size();
    double spread = 0;
    for (const auto& q : pose)
      for (int a = 0; a < 3; ++a) spread += (q[a] - centroid[a]) * (q[a] - centroid[a]);
    spread = std::sqrt(spread / pose.size());
    const auto r = random_rotation(rng);
    const double s = scale(rng);
    const metrics::Vec3 t{shift(rng), shift(rng), shift(rng)};
    Tensor<double> a({17, 3}), b({17, 3});
    for (std::size_t j = 0; j < 17; ++j)
      for (int k = 0; k < 3; ++k) {
        b.at({j, std::size_t(k)}) = pose[j][k];
        a.at({j, std::size_t(k)}) =
            s * (r[k][0] * pose[j][0] + r[k][1] * pose[j][1] + r[k][2] * pose[j][2]) + t[k];
      }
    worst = std::max(worst, metrics::p_mpjpe(a, b) / spread);
  }
  return make(worst, 1e-6, worst <= 1e-6, "P-MPJPE / pose spread over 48 transformed poses");
}

CheckResult metrics_procrustes_bound(const SuiteOptions& o) {
  Rng rng(o.seed + 21);
  const auto gt = synthetic_poses(o.seed + 1, 3, 10);
  std::size_t violations = 0;
  double worst = -1e300;
  for (int trial = 0; trial < 30; ++trial) {
    auto pred = gt;
    const double amp = 5.0 * (trial + 1);
    for (auto& v : pred.data()) v += std::uniform_real_distribution<double>(-amp, amp)(rng);
    for (std::size_t i = 0; i < pred.size(); i += 51) pred[i] += 300;  // a few gross outliers
    const double p1 = metrics::mpjpe(pred, gt), p2 = metrics::p_mpjpe(pred, gt);
    worst = std::max(worst, p2 - p1);
    violations += p2 > p1;
  }
  return make(worst, 0, violations == 0, "max P-MPJPE - MPJPE over 30 noisy clips (mm)");
}

CheckResult metrics_pck_auc(const SuiteOptions& o) {
  Rng rng(o.seed + 22);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto errors = random_tensor<double>(rng, {257}, 0, 180).vec();
    for (std::size_t i = 0; i < errors.size(); i += 9) errors[i] = 5.0 * (i % 31);
    std::size_t hits = 0, pairs = 0, at150 = 0;
    for (int k = 0; k <= 30; ++k)
      for (double e : errors) {
        ++pairs;
        hits += e <= 5.0 * k;
      }
    for (double e : errors) at150 += e <= 150.0;
    mismatches += metrics::auc_of_errors(errors) != 100.0 * hits / pairs;
    mismatches += metrics::pck_of_errors(errors, 150) != 100.0 * at150 / errors.size();
  }
  return make(double(mismatches), 0, mismatches == 0, "exact equality with enumeration, 20 draws");
}

CheckResult metrics_exact(const SuiteOptions& o) {
  const auto gt = synthetic_poses(o.seed + 2, 2, 8);
  const double pck = metrics::pck(gt, gt), auc = metrics::auc(gt, gt);
  const double mp = metrics::mpjpe(gt, gt), pmp = metrics::p_mpjpe(gt, gt);
  const bool ok = pck == 100 && auc == 100 && mp == 0 && pmp < 1e-9;
  std::ostringstream d;
  d << "PCK " << pck << ", AUC " << auc << ", MPJPE " << mp << ", P-MPJPE " << pmp;
  return make(std::max(100 - pck, 100 - auc), 0, ok, d.str());
}

CheckResult metrics_loss_identities(const SuiteOptions& o) {
  Rng rng(o.seed + 23);
  std::size_t failures = 0;
  std::string what;
  auto fail = [&](const std::string& m) {
    ++failures;
    what += (what.empty() ? "" : "; ") + m;
  };
  auto gt = random_tensor<double>(rng, {2, 6, 17, 3}, -800, 800);
  // quarter-millimetre grid keeps every difference exact
  for (auto& v : gt.data()) v = std::round(4 * v) / 4;
  auto shifted = gt;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += (i % 3 == 0 ? 12.5 : (i % 3 == 1 ? -3.0 : 40.25));
  auto other = random_tensor<double>(rng, gt.shape(), -800, 800);
  Tape<double> tape(false);
  for (LossReduction red : {LossReduction::mean, LossReduction::sum}) {
    const std::string r = red == LossReduction::mean ? "mean" : "sum";
    for (double lambda : {0.0, 0.5, 1.0}) {
      const auto self = values_of(loss_total(tape.constant(gt), tape.constant(gt), lambda, red));
      if (self.total != 0) fail("loss(x, x) " + r);
      const auto t = values_of(loss_total(tape.constant(other), tape.constant(gt), lambda, red));
      if (t.total != t.position + lambda * t.velocity) fail("combination " + r);
    }
    if (loss_velocity(tape.constant(shifted), tape.constant(gt), red).value()[0] != 0)
      fail("velocity offset " + r);
  }
  return make(double(failures), 0, failures == 0,
              failures ? what : "zero self loss, offset-free velocity, exact lambda combination");
}

const std::vector<CheckInfo> kChecks = {
    {"grad", "grad.primitives", "reverse-mode gradients of the elementary ops against finite differences", grad_primitives},
    {"grad", "grad.conv", "depth-wise, dilated, cascaded and pointwise convolution gradients", grad_conv},
    {"grad", "grad.blocks", "SSRformer, STformer, fusion and loss gradients", grad_blocks},
    {"grad", "grad.model", "end-to-end model gradient on a tiny double-precision config", grad_model},
    {"equiv", "equiv.cascade_dense", "cascaded kernels equal one dense kernel for every reference spec", equiv_cascade},
    {"equiv", "equiv.tamper_detected", "a perturbed dense kernel is caught by the cascade comparison", equiv_tamper_detected},
    {"equiv", "equiv.oracles", "kernels agree with direct summation oracles", equiv_oracles},
    {"equiv", "equiv.effective_extent", "effective extents reproduce the reference kernel shapes", equiv_extents},
    {"equiv", "equiv.locality", "spatial long-only context ignores joints beyond its half-width", equiv_locality},
    {"equiv", "equiv.fusion_normalization", "stream weights sum to one at every position", equiv_fusion},
    {"equiv", "equiv.census", "parameter counts of the presets and linearity in depth", equiv_census},
    {"equiv", "equiv.round_trips", "clip and checkpoint files round-trip bit for bit", equiv_round_trips},
    {"metrics", "metrics.procrustes_invariance", "similarity-transformed copies have zero P-MPJPE", metrics_procrustes_invariance},
    {"metrics", "metrics.procrustes_bound", "P-MPJPE never exceeds MPJPE", metrics_procrustes_bound},
    {"metrics", "metrics.pck_auc", "PCK and AUC equal exhaustive enumeration", metrics_pck_auc},
    {"metrics", "metrics.exact_predictions", "exact predictions score PCK 100 and AUC 100", metrics_exact},
    {"metrics", "metrics.loss_identities", "loss identities hold exactly", metrics_loss_identities},
};

CheckResult run_info(const CheckInfo& info, const SuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = info.run(options);
  } catch (const std::exception& e) {
    r = make(0, 0, false, std::string("threw: ") + e.what());
  }
  r.suite = info.suite;
  r.name = info.name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

const std::vector<CheckInfo>& registry() { return kChecks; }

std::vector<std::string> suite_names() { return {"grad", "equiv", "metrics"}; }

CheckResult run_check(const std::string& name, const SuiteOptions& options) {
  for (const auto& c : kChecks)
    if (c.name == name) return run_info(c, options);
  throw std::invalid_argument("unknown check '" + name + "'");
}

std::vector<CheckResult> run_suite(const std::string& suite, const SuiteOptions& options) {
  const auto names = suite_names();
  if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end())
    throw std::invalid_argument("unknown suite '" + suite + "' (expected grad, equiv, metrics or all)");
  std::vector<CheckResult> out;
  for (const auto& c : kChecks)
    if (suite == "all" || c.suite == suite) out.push_back(run_info(c, options));
  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string results_json(const std::vector<CheckResult>& results) {
  nlohmann::ordered_json j;
  j["passed"] = all_passed(results);
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& r : results)
    j["checks"].push_back({{"suite", r.suite},
                           {"name", r.name},
                           {"passed", r.passed},
                           {"measured", r.measured},
                           {"limit", r.limit},
                           {"detail", r.detail},
                           {"seconds", r.seconds}});
  return j.dump(2);
}

}  // namespace ssrstf::verify
