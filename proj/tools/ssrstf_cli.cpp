// ssrstf: data generation, training, evaluation, inference and self-checks.
// JSON results go to stdout, diagnostics to stderr.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "ssrstf/config.hpp"
#include "ssrstf/data.hpp"
#include "ssrstf/metrics.hpp"
#include "ssrstf/model.hpp"
#include "ssrstf/trainer.hpp"
#include "ssrstf/verify/suites.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ssrstf;

namespace {

// Raised for bad arguments that CLI11 itself cannot see.
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / "manifest.json" : data;
}

// gen-data

struct GenArgs {
  fs::path out;
  std::size_t clips = 8;
  std::size_t frames = 243;
  std::size_t joints = 17;
  std::uint64_t seed = 0;
  double noise = 0.005;
  std::optional<std::size_t> test_clips;
};

int gen_data(const GenArgs& a) {
  if (a.clips < 1) throw ArgumentError("--clips must be at least 1");
  if (a.frames < 1) throw ArgumentError("--frames must be at least 1");
  if (a.joints < 2 || a.joints > 17) throw ArgumentError("--joints must be in [2, 17] (J >= 2)");
  if (!(a.noise >= 0)) throw ArgumentError("--noise must be non-negative");
  const std::size_t test = a.test_clips.value_or(a.clips >= 4 ? a.clips / 4 : 0);
  if (test >= a.clips) throw ArgumentError("--test-clips must leave at least one training clip");

  auto rig = data::SyntheticRigConfig::h36m().truncated(a.joints);
  rig.seed = a.seed;
  rig.keypoint_noise = a.noise;
  const auto pairs = data::generate_synthetic(rig, a.clips, a.frames);
  const auto manifest = data::write_dataset(a.out, pairs, test);

  json clips = json::array();
  std::size_t train = 0;
  for (const auto& e : manifest.entries) {
    train += e.split == data::Split::train;
    clips.push_back({{"id", e.id},
                     {"action", e.action},
                     {"split", data::to_string(e.split)},
                     {"input_crc32", e.input.crc32},
                     {"target_crc32", e.target.crc32}});
  }
  print({{"out", a.out.string()},
         {"manifest", (a.out / "manifest.json").string()},
         {"clips", a.clips},
         {"frames", a.frames},
         {"joints", a.joints},
         {"seed", a.seed},
         {"noise", a.noise},
         {"train_clips", train},
         {"test_clips", manifest.entries.size() - train},
         {"entries", clips}});
  return 0;
}

// train

struct TrainArgs {
  fs::path config;
  fs::path data;
  fs::path out;
  fs::path resume;
  std::optional<std::size_t> stop_after;
};

int train(const TrainArgs& a) {
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);
  RunConfig config;
  if (!a.config.empty()) {
    config = RunConfig::load(a.config.string());
    if (resume && !(resume->config.model == config.model))
      throw ArgumentError("model settings in " + a.config.string() + " differ from checkpoint " +
                       a.resume.string());
  } else if (resume) {
    config = resume->config;
  } else {
    throw ArgumentError("train needs --config or --resume");
  }
  fs::path data_dir = a.data.empty() ? fs::path(config.data_dir) : a.data;
  if (data_dir.empty()) throw ArgumentError("no data directory: pass --data or set data.dir");
  config.data_dir = data_dir.string();

  const auto manifest = data::DatasetManifest::load(manifest_path(data_dir));
  auto train_clips = data::load_split(manifest, data::Split::train);
  std::vector<data::ClipPair> eval_clips;
  for (const auto& e : manifest.entries)
    if (e.split == data::Split::test) {
      eval_clips = data::load_split(manifest, data::Split::test);
      break;
    }
  if (train_clips.front().input.joints != config.model.joints)
    throw ArgumentError("data has " + std::to_string(train_clips.front().input.joints) +
                     " joints, model.joints is " + std::to_string(config.model.joints));

  fs::create_directories(a.out);
  {
    std::ofstream f(a.out / "config.json");
    f << config.to_json();
  }
  Trainer::Options options;
  options.checkpoint = a.out / "checkpoint.ssrw";
  options.log = a.out / "train_log.jsonl";
  options.stop_after = a.stop_after;
  options.on_epoch = [](const EpochRecord& r) { std::cerr << r.to_json_line() << "\n"; };

  std::optional<Trainer> trainer;
  if (resume) {
    Checkpoint ckpt = std::move(*resume);
    ckpt.config.trainer = config.trainer;  // lets a resumed run extend its epoch budget
    ckpt.config.data_dir = config.data_dir;
    trainer.emplace(ckpt, std::move(train_clips), std::move(eval_clips));
  } else {
    trainer.emplace(config, std::move(train_clips), std::move(eval_clips));
  }
  const auto records = trainer->run(options);

  json epochs = json::array();
  for (const auto& r : records) epochs.push_back(json::parse(r.to_json_line()));
  const auto& p = trainer->progress();
  print({{"checkpoint", options.checkpoint.string()},
         {"log", options.log.string()},
         {"finished", trainer->finished()},
         {"epoch", p.epoch},
         {"batch", p.batch},
         {"global_step", p.global_step},
         {"epochs", epochs}});
  return 0;
}

// eval

struct EvalArgs {
  fs::path ckpt;
  fs::path data;
  std::string protocol = "all";
  bool strict_rigid = false;
  fs::path hist;
  double bin_width = 10.0;
  std::string split = "test";
};

int eval(const EvalArgs& a) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto manifest = data::DatasetManifest::load(manifest_path(a.data));
  const auto clips = data::load_split(manifest, a.split == "train" ? data::Split::train : data::Split::test);
  std::vector<metrics::EvalClip> eval_clips;
  for (const auto& c : clips)
    eval_clips.push_back({c.action, predict_clip(ckpt.params, ckpt.config.model, c.input), c.target.tensor()});
  metrics::EvalOptions opts;
  opts.mode = a.strict_rigid ? metrics::ProcrustesMode::rigid : metrics::ProcrustesMode::similarity;
  opts.bin_width_mm = a.bin_width;
  const auto report = metrics::evaluate(eval_clips, opts);
  if (!a.hist.empty()) {
    std::ofstream f(a.hist);
    if (!f) throw std::runtime_error("cannot write " + a.hist.string());
    f << report.histogram.to_csv();
  }

  json full = json::parse(report.to_json());
  json out;
  out["checkpoint"] = a.ckpt.string();
  out["split"] = a.split;
  out["clips"] = clips.size();
  out["poses"] = full["poses"];
  if (a.protocol == "all") {
    for (auto& [k, v] : full.items())
      if (k != "poses") out[k] = v;
  } else if (a.protocol == "p1") {
    out["mpjpe_mm"] = full["mpjpe_mm"];
  } else if (a.protocol == "p2") {
    out["p_mpjpe_mm"] = full["p_mpjpe_mm"];
    out["procrustes_mode"] = full["procrustes_mode"];
    out["procrustes_fallbacks"] = full["procrustes_fallbacks"];
  } else if (a.protocol == "pck") {
    out["pck_threshold_mm"] = full["pck_threshold_mm"];
    out["pck_percent"] = full["pck_percent"];
  } else {
    out["auc_percent"] = full["auc_percent"];
  }
  print(out);
  return 0;
}

// infer

int infer(const fs::path& ckpt_path, const fs::path& input, const fs::path& out) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto clip = data::load_clip(input);
  if (clip.kind != data::PoseKind::pose2d)
    throw ArgumentError(input.string() + " holds a " + data::to_string(clip.kind) +
                     " clip; infer needs 2D keypoints");
  const auto pred = predict_clip(ckpt.params, ckpt.config.model, clip);
  const auto result = data::PoseClip::from_tensor(out.stem().string(), data::PoseKind::pose3d, pred, clip.fps);
  data::save_clip(result, out);
  print({{"input", input.string()},
         {"out", out.string()},
         {"frames", result.frames},
         {"joints", result.joints},
         {"fps", result.fps},
         {"crc32", data::payload_checksum(result)}});
  return 0;
}

// verify

int run_verify(const std::string& suite, const verify::SuiteOptions& opts, bool list) {
  if (list) {
    json checks = json::array();
    for (const auto& c : verify::registry())
      checks.push_back({{"suite", c.suite}, {"name", c.name}, {"description", c.description}});
    print({{"checks", checks}});
    return 0;
  }
  const auto& names = verify::suite_names();
  if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end())
    throw ArgumentError("unknown suite '" + suite + "'");
  std::vector<verify::CheckResult> results;
  for (const auto& c : verify::registry()) {
    if (suite != "all" && c.suite != suite) continue;
    auto r = verify::run_check(c.name, opts);
    std::cerr << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured " << r.measured
              << " limit " << r.limit << "  " << r.detail << " (" << r.seconds << " s)\n";
    results.push_back(std::move(r));
  }
  std::cout << verify::results_json(results) << "\n";
  if (!verify::all_passed(results)) {
    std::size_t failed = 0;
    for (const auto& r : results) failed += !r.passed;
    std::cerr << "verify: " << failed << " of " << results.size() << " checks FAILED\n";
    return 1;
  }
  return 0;
}

// info

int info(const fs::path& config_path, const std::string& preset) {
  RunConfig c;
  if (!config_path.empty())
    c = RunConfig::load(config_path.string());
  else
    c = RunConfig::from_preset(preset);
  const auto& m = c.model;
  json breakdown = json::object();
  for (const auto& [name, n] : param_breakdown(m)) breakdown[name] = n;
  const std::size_t total = param_count(m);
  json extents = {effective_extent(m.kernel.long_axis.k, m.kernel.long_axis.d),
                  m.kernel.short_axis ? effective_extent(m.kernel.short_axis->k, m.kernel.short_axis->d) : 1};
  print({{"preset", c.preset},
         {"depth", m.depth},
         {"channels", m.channels},
         {"hidden", m.hidden},
         {"parameters", total},
         {"parameters_millions", total / 1e6},
         {"breakdown", breakdown},
         {"kernel", m.kernel.to_string()},
         {"kernel_shape", m.kernel.shape_label()},
         {"effective_extents", extents}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSR-STF pose lifting: data, training, evaluation and self-checks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write synthetic paired 2D/3D clips and a manifest");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--clips", gen.clips, "number of clip pairs");
  gen_cmd->add_option("--frames", gen.frames, "frames per clip");
  gen_cmd->add_option("--joints", gen.joints, "joints per pose (leading joints of the 17-joint rig)");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--noise", gen.noise, "2D keypoint noise sigma, normalized image units");
  gen_cmd->add_option("--test-clips", gen.test_clips, "clips held out for the test split (default clips/4)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model, writing a log and checkpoints");
  train_cmd->add_option("--config", tr.config, "run config JSON");
  train_cmd->add_option("--data", tr.data, "dataset directory or manifest");
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
  train_cmd->add_option("--stop-after", tr.stop_after, "stop (with a checkpoint) after this many steps");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "dataset directory or manifest")->required();
  eval_cmd->add_option("--protocol", ev.protocol, "p1, p2, pck, auc or all")
      ->check(CLI::IsMember({"p1", "p2", "pck", "auc", "all"}));
  eval_cmd->add_flag("--strict-rigid", ev.strict_rigid, "Procrustes without scale");
  eval_cmd->add_option("--hist", ev.hist, "write the per-pose error histogram as CSV");
  eval_cmd->add_option("--bin-width", ev.bin_width, "histogram bin width in mm")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--split", ev.split, "train or test")->check(CLI::IsMember({"train", "test"}));

  fs::path in_ckpt, in_input, in_out;
  auto* infer_cmd = app.add_subcommand("infer", "lift one 2D clip to 3D");
  infer_cmd->add_option("--ckpt", in_ckpt, "checkpoint")->required();
  infer_cmd->add_option("--input", in_input, "pose2d clip")->required();
  infer_cmd->add_option("--out", in_out, "pose3d clip to write")->required();

  std::string suite = "all";
  verify::SuiteOptions vopts;
  bool list = false;
  auto* verify_cmd = app.add_subcommand("verify", "run the self-check suites");
  verify_cmd->add_option("--suite", suite, "grad, equiv, metrics or all");
  verify_cmd->add_flag("--f64", vopts.f64, "run equivalence checks in double precision");
  verify_cmd->add_flag("--tamper", vopts.tamper, "perturb the composed kernels (the suite must fail)");
  verify_cmd->add_option("--seed", vopts.seed, "seed for random inputs");
  verify_cmd->add_flag("--list", list, "list the checks and exit");

  fs::path info_config;
  std::string preset = "base";
  auto* info_cmd = app.add_subcommand("info", "parameter census and kernel extents");
  auto* info_cfg = info_cmd->add_option("--config", info_config, "run config JSON");
  info_cmd->add_option("--preset", preset, "base or small")->excludes(info_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_cmd) return train(tr);
    if (*eval_cmd) return eval(ev);
    if (*infer_cmd) return infer(in_ckpt, in_input, in_out);
    if (*verify_cmd) return run_verify(suite, vopts, list);
    if (*info_cmd) return info(info_config, preset);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
