#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <random>

#include "ssrstf/trainer.hpp"

using namespace ssrstf;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ssrstf_trainer_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

RunConfig tiny_run() {
  RunConfig c;
  c.model.depth = 1;
  c.model.channels = 8;
  c.model.hidden = 8;
  c.model.frames = 6;
  c.model.joints = 17;
  c.model.heads = 2;
  c.model.kernel = SSRAKernelSpec{{7, 2}, AxisKernel{3, 1}};
  c.trainer.epochs = 3;
  c.trainer.batch_size = 2;
  c.trainer.lr = 2e-3;
  c.trainer.seed = 17;
  c.trainer.init_seed = 4;
  c.trainer.eval_every = 1;
  return c;
}

std::vector<data::ClipPair> tiny_clips(std::size_t n = 3, std::size_t frames = 14) {
  auto rig = data::SyntheticRigConfig::h36m();
  rig.seed = 21;
  return data::generate_synthetic(rig, n, frames);
}

template <typename T>
bool same_params(const ParamSet<T>& a, const ParamSet<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].decay != b[i].decay ||
        a[i].value.shape() != b[i].value.shape())
      return false;
    if (std::memcmp(a[i].value.ptr(), b[i].value.ptr(), a[i].value.size() * sizeof(T)) != 0)
      return false;
  }
  return true;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Rewrites the JSON header of a checkpoint file, keeping its payload.
void edit_header(const std::filesystem::path& p,
                 const std::function<void(nlohmann::ordered_json&)>& edit) {
  auto bytes = read_bytes(p);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  auto header = nlohmann::ordered_json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  edit(header);
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 16 + static_cast<long>(len), bytes.end());
  write_bytes(p, out);
}

ParamSet<double> two_params(double w, double b) {
  ParamSet<double> p;
  p.add("w", Tensor<double>({1}, w), true);
  p.add("b", Tensor<double>({1}, b), false);
  return p;
}

}  // namespace

TEST(AdamW, ZeroGradientsAndDecayLeaveWeightsUnchanged) {
  auto p = init_weights<float>(tiny_run().model, 1);
  const auto before = p;
  auto state = AdamWState<float>::zeros_like(p);
  std::vector<Tensor<float>> grads;
  for (const auto& q : p) grads.push_back(Tensor<float>::zeros(q.value.shape()));
  AdamWHyper h;
  h.weight_decay = 0;
  for (int i = 0; i < 3; ++i) adamw_step(p, grads, state, 1e-3, h);
  EXPECT_TRUE(same_params(p, before));
  EXPECT_EQ(state.step, 3u);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  for (double g : {0.5, -3.0, 1e-3}) {
    auto p = two_params(1.0, 2.0);
    auto state = AdamWState<double>::zeros_like(p);
    AdamWHyper h;
    h.weight_decay = 0;
    adamw_step(p, {Tensor<double>({1}, g), Tensor<double>({1}, g)}, state, 1e-2, h);
    // bias-corrected ratio g / sqrt(g^2) = sign(g)
    const double expected = 1e-2 * std::abs(g) / (std::abs(g) + 1e-8);
    EXPECT_NEAR(std::abs(p.at("w")[0] - 1.0), expected, 1e-15);
    EXPECT_NEAR(std::abs(p.at("b")[0] - 2.0), expected, 1e-15);
    EXPECT_LT((p.at("w")[0] - 1.0) * g, 0.0);
  }
}

TEST(AdamW, DecayIsDecoupledAndSkipsExemptParameters) {
  auto p = two_params(2.0, 2.0);
  auto state = AdamWState<double>::zeros_like(p);
  AdamWHyper h;
  h.weight_decay = 0.1;
  adamw_step(p, {Tensor<double>({1}), Tensor<double>({1})}, state, 0.5, h);
  EXPECT_EQ(p.at("w")[0], 2.0 * (1.0 - 0.5 * 0.1));
  EXPECT_EQ(p.at("b")[0], 2.0);
}

TEST(AdamW, QuadraticTrajectoryMatchesScalarReference) {
  // f(w) = a/2 (w - c)^2 on each scalar
  const std::vector<double> a = {1.0, 0.3, 4.0}, c = {0.5, -2.0, 1.5};
  ParamSet<double> p;
  p.add("w", Tensor<double>({2}, std::vector<double>{0.1, -0.7}), true);
  p.add("b", Tensor<double>({1}, 3.0), false);
  auto state = AdamWState<double>::zeros_like(p);
  const AdamWHyper h{0.9, 0.999, 1e-8, 0.05};
  const double lr = 0.05;

  std::vector<double> w = {0.1, -0.7, 3.0}, m(3, 0.0), v(3, 0.0);
  const std::vector<bool> decay = {true, true, false};
  for (int t = 1; t <= 10; ++t) {
    std::vector<Tensor<double>> grads = {Tensor<double>({2}), Tensor<double>({1})};
    grads[0][0] = a[0] * (p.at("w")[0] - c[0]);
    grads[0][1] = a[1] * (p.at("w")[1] - c[1]);
    grads[1][0] = a[2] * (p.at("b")[0] - c[2]);
    adamw_step(p, grads, state, lr, h);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = a[i] * (w[i] - c[i]);
      if (decay[i]) w[i] -= lr * h.weight_decay * w[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_NEAR(p.at("w")[0], w[0], 1e-10);
  EXPECT_NEAR(p.at("w")[1], w[1], 1e-10);
  EXPECT_NEAR(p.at("b")[0], w[2], 1e-10);
}

TEST(AdamW, NonFiniteGradientNamesParameterAndChangesNothing) {
  auto p = two_params(1.0, 1.0);
  auto state = AdamWState<double>::zeros_like(p);
  std::vector<Tensor<double>> grads = {Tensor<double>({1}, 0.5),
                                       Tensor<double>({1}, std::numeric_limits<double>::quiet_NaN())};
  try {
    adamw_step(p, grads, state, 0.1, AdamWHyper{});
    FAIL() << "no error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(p.at("w")[0], 1.0);
  EXPECT_EQ(state.step, 0u);
  grads.pop_back();
  EXPECT_THROW(adamw_step(p, grads, state, 0.1, AdamWHyper{}), std::invalid_argument);
}

TEST(GradientClip, RescalesToGlobalNorm) {
  std::vector<Tensor<double>> g = {Tensor<double>({2}, std::vector<double>{3, 0}),
                                   Tensor<double>({1}, 4.0)};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(g[0][0], 0.6);
  EXPECT_DOUBLE_EQ(g[1][0], 0.8);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), global_norm(g));
  EXPECT_DOUBLE_EQ(g[0][0], 0.6);
}

TEST(Schedule, ClosedForm) {
  EXPECT_EQ(lr_at(0), 6e-4);
  const double one = lr_at(1);
  EXPECT_LE(std::abs(one - 5.94e-4), std::nextafter(5.94e-4, 1.0) - 5.94e-4);
  EXPECT_EQ(lr_at(90), 6e-4 * std::pow(0.99, 90));
  for (std::size_t e = 1; e < 90; ++e) {
    const double ref = 6e-4 * std::pow(0.99, static_cast<double>(e));
    EXPECT_LE(std::abs(lr_at(e) - ref), std::nextafter(ref, 1.0) - ref) << e;
    EXPECT_LT(lr_at(e), lr_at(e - 1));
  }
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  TempDir dir;
  const auto clips = tiny_clips();
  Trainer trainer(tiny_run(), clips, {});
  Trainer::Options opt;
  opt.stop_after = 3;
  trainer.run(opt);
  const Checkpoint ck = trainer.checkpoint();
  save_checkpoint(ck, dir.path / "a.ssrw");
  const Checkpoint back = load_checkpoint(dir.path / "a.ssrw");
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.progress, ck.progress);
  EXPECT_TRUE(same_params(back.params, ck.params));
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->step, 3u);
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_EQ(back.optimizer->m[i].vec(), ck.optimizer->m[i].vec());
    EXPECT_EQ(back.optimizer->v[i].vec(), ck.optimizer->v[i].vec());
  }
  // forward outputs bit-identical before and after
  const auto a = predict_clip(ck.params, ck.config.model, clips[0].input);
  const auto b = predict_clip(back.params, back.config.model, clips[0].input);
  EXPECT_EQ(a.vec(), b.vec());
  // saving again reproduces the file byte for byte
  save_checkpoint(back, dir.path / "b.ssrw");
  EXPECT_EQ(read_bytes(dir.path / "a.ssrw"), read_bytes(dir.path / "b.ssrw"));
}

TEST(Checkpoint, FormatErrors) {
  TempDir dir;
  const auto path = dir.path / "c.ssrw";
  Checkpoint ck{tiny_run(), init_weights<float>(tiny_run().model, 2), std::nullopt, {}};
  save_checkpoint(ck, path);
  const auto good = read_bytes(path);
  EXPECT_FALSE(load_checkpoint(path).optimizer.has_value());

  auto expect_error = [&](const std::vector<std::uint8_t>& bytes, const std::string& needle) {
    write_bytes(path, bytes);
    try {
      load_checkpoint(path);
      ADD_FAILURE() << "no error for " << needle;
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto magic = good;
  magic[1] = 'X';
  expect_error(magic, "\"SSRW\"");
  auto version = good;
  version[4] = 9;
  expect_error(version, "version 9");
  expect_error(std::vector<std::uint8_t>(good.begin(), good.end() - 10), "truncated");
  expect_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 40), "truncated");
  auto flipped = good;
  flipped[flipped.size() - 20] ^= 0x10;
  expect_error(flipped, "checksum");
}

TEST(Checkpoint, MissingTensorIsNamed) {
  TempDir dir;
  const auto path = dir.path / "m.ssrw";
  Trainer trainer(tiny_run(), tiny_clips(), {});
  save_checkpoint(trainer.checkpoint(), path);
  std::string removed;
  edit_header(path, [&](nlohmann::ordered_json& h) {
    auto& t = h["tensors"];
    removed = t[3]["name"].get<std::string>();
    t.erase(3);
  });
  try {
    load_checkpoint(path);
    FAIL() << "no error";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("'" + removed + "'"), std::string::npos) << e.what();
  }
  save_checkpoint(trainer.checkpoint(), path);
  edit_header(path, [&](nlohmann::ordered_json& h) {
    auto& t = h["tensors"];
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i]["role"] == "adam_v") {
        removed = t[i]["name"].get<std::string>();
        t.erase(i);
        break;
      }
  });
  try {
    load_checkpoint(path);
    FAIL() << "no error";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("'" + removed + "'"), std::string::npos) << e.what();
  }
}

TEST(Trainer, ZeroEpochsKeepsInitialization) {
  TempDir dir;
  RunConfig c = tiny_run();
  c.trainer.epochs = 0;
  Trainer trainer(c, tiny_clips(), {});
  Trainer::Options opt;
  opt.checkpoint = dir.path / "ck.ssrw";
  EXPECT_TRUE(trainer.run(opt).empty());
  const auto ck = load_checkpoint(opt.checkpoint);
  EXPECT_TRUE(same_params(ck.params, init_weights<float>(c.model, c.trainer.init_seed)));
  EXPECT_EQ(ck.progress.global_step, 0u);
}

TEST(Trainer, RunsAreDeterministicAndLogged) {
  TempDir dir;
  const auto clips = tiny_clips();
  Trainer a(tiny_run(), clips, {}), b(tiny_run(), clips, {});
  Trainer::Options opt;
  opt.log = dir.path / "a.jsonl";
  const auto ra = a.run(opt);
  opt.log = dir.path / "b.jsonl";
  const auto rb = b.run(opt);
  ASSERT_EQ(ra.size(), 3u);
  EXPECT_TRUE(same_params(a.params(), b.params()));
  EXPECT_EQ(read_bytes(dir.path / "a.jsonl"), read_bytes(dir.path / "b.jsonl"));
  // 3 clips of 14 frames in windows of 6 -> 9 windows -> 5 batches of 2
  std::ifstream log(dir.path / "a.jsonl");
  std::string line;
  std::size_t epoch = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<std::size_t>(), epoch);
    EXPECT_EQ(j.at("lr").get<double>(), lr_at(epoch, 2e-3, 0.99));
    EXPECT_EQ(j.at("steps").get<std::size_t>(), 5u);
    for (const char* k : {"l_p", "l_delta", "total", "eval_mpjpe_mm"})
      EXPECT_TRUE(j.at(k).is_number()) << k;
    // per-step terms are single precision
    EXPECT_NEAR(j["total"].get<double>(), j["l_p"].get<double>() + j["l_delta"].get<double>(),
                1e-6 * j["total"].get<double>());
    ++epoch;
  }
  EXPECT_EQ(epoch, 3u);
  EXPECT_EQ(a.progress().global_step, 15u);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  TempDir dir;
  const auto clips = tiny_clips();
  Trainer straight(tiny_run(), clips, {});
  Trainer::Options full;
  full.log = dir.path / "straight.jsonl";
  straight.run(full);

  // stop mid-epoch (7 = one epoch of 5 plus 2), persist, resume from disk
  Trainer first(tiny_run(), clips, {});
  Trainer::Options part;
  part.log = dir.path / "resumed.jsonl";
  part.checkpoint = dir.path / "ck.ssrw";
  part.stop_after = 7;
  first.run(part);
  EXPECT_EQ(first.progress().epoch, 1u);
  EXPECT_EQ(first.progress().batch, 2u);
  Trainer resumed(load_checkpoint(part.checkpoint), clips, {});
  part.stop_after.reset();
  resumed.run(part);

  EXPECT_TRUE(same_params(straight.params(), resumed.params()));
  EXPECT_EQ(straight.progress(), resumed.progress());
  EXPECT_EQ(read_bytes(full.log), read_bytes(part.log));
}

TEST(Trainer, StepLimitStopsTraining) {
  RunConfig c = tiny_run();
  c.trainer.max_steps = 4;
  Trainer t(c, tiny_clips(), {});
  t.run({});
  EXPECT_EQ(t.progress().global_step, 4u);
  EXPECT_TRUE(t.finished());
}

TEST(Trainer, LossDecreasesOnSmallProblem) {
  RunConfig c = tiny_run();
  c.trainer.epochs = 20;
  c.trainer.eval_every = 0;
  c.trainer.lr = 3e-3;
  Trainer t(c, tiny_clips(2, 12), {});
  const auto records = t.run({});
  ASSERT_EQ(records.size(), 20u);
  EXPECT_LT(records.back().total, 0.5 * records.front().total);
  EXPECT_FALSE(records.front().eval_mpjpe_mm.has_value());
}

TEST(Trainer, DivergenceKeepsLastGoodCheckpoint) {
  TempDir dir;
  auto clips = tiny_clips();
  RunConfig c = tiny_run();
  Trainer good(c, clips, {});
  Trainer::Options opt;
  opt.checkpoint = dir.path / "ck.ssrw";
  opt.stop_after = 5;  // exactly one epoch
  good.run(opt);
  const auto saved = read_bytes(opt.checkpoint);

  auto poisoned = clips;
  for (auto& p : poisoned) p.input.values[4] = std::numeric_limits<float>::quiet_NaN();
  Trainer bad(load_checkpoint(opt.checkpoint), poisoned, {});
  opt.stop_after.reset();
  EXPECT_THROW(bad.run(opt), DivergenceError);
  EXPECT_EQ(read_bytes(opt.checkpoint), saved);
}

TEST(Inference, PreservesShapeAndIsDeterministic) {
  const RunConfig c = tiny_run();
  const auto params = init_weights<float>(c.model, 9);
  const auto clips = tiny_clips(1, 13);  // not a multiple of the window
  const auto a = predict_clip(params, c.model, clips[0].input);
  const auto b = predict_clip(params, c.model, clips[0].input);
  EXPECT_EQ(a.shape(), (Shape{13, 17, 3}));
  EXPECT_EQ(a.vec(), b.vec());
  for (std::size_t t = 0; t < 13; ++t)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.at({t, 0, k}), 0.0);
  EXPECT_THROW(predict_clip(params, c.model, clips[0].target), std::invalid_argument);
}

TEST(Inference, WindowedPredictionMatchesDirectForward) {
  const RunConfig c = tiny_run();
  const auto params = init_weights<float>(c.model, 9);
  const auto clips = tiny_clips(1, 6);
  const auto pred = predict_clip(params, c.model, clips[0].input);
  Tape<float> tape(false);
  ParamBinding<float> b(tape, params);
  Tensor<float> x({1, 6, 17, 3}, clips[0].input.values);
  const auto pose = forward(tape.constant(x), b, c.model).pose.value();
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t k = 0; k < 3; ++k)
        EXPECT_EQ(pred.at({t, j, k}), static_cast<double>(pose.at({0, t, j, k})) -
                                          pose.at({0, t, 0, k}));
}
