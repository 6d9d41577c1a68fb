#pragma once

// AdamW, the learning-rate schedule, the "SSRW" checkpoint container and the
// epoch loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssrstf/config.hpp"
#include "ssrstf/data.hpp"
#include "ssrstf/model.hpp"
#include "ssrstf/params.hpp"

namespace ssrstf {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  static AdamWHyper from(const TrainerSettings& t) {
    return {t.beta1, t.beta2, t.eps, t.weight_decay};
  }
};

template <typename T>
struct AdamWState {
  std::vector<Tensor<T>> m;  // first moments, one per parameter
  std::vector<Tensor<T>> v;  // second moments
  std::uint64_t step = 0;

  static AdamWState zeros_like(const ParamSet<T>& params);
};

/// One AdamW update. Decay w <- w (1 - lr wd) is applied to parameters flagged
/// for decay before the bias-corrected Adam step. Arithmetic is done in double
/// per element. Throws NumericError naming the parameter on a non-finite
/// gradient, before anything is modified.
template <typename T>
void adamw_step(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, AdamWState<T>& state,
                double lr, const AdamWHyper& hyper);

/// Global L2 norm of all gradients.
template <typename T>
double global_norm(const std::vector<Tensor<T>>& grads);

/// Rescales the gradients so their global norm is at most max_norm (> 0).
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm);

/// lr0 * decay^epoch.
double lr_at(std::size_t epoch, double lr0 = 6e-4, double decay = 0.99);

// Checkpoints.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Position of the training loop. Batch order is a pure function of
/// (shuffle seed, epoch), so the epoch and batch index are the whole RNG state.
struct TrainProgress {
  std::size_t epoch = 0;           // current (unfinished) epoch
  std::size_t batch = 0;           // batches already done in that epoch
  std::uint64_t global_step = 0;
  // running sums of the current epoch, for its log line
  double sum_position = 0;
  double sum_velocity = 0;
  double sum_total = 0;

  friend bool operator==(const TrainProgress&, const TrainProgress&) = default;
};

struct Checkpoint {
  RunConfig config;
  ParamSet<float> params;
  std::optional<AdamWState<float>> optimizer;
  TrainProgress progress;
};

/// "SSRW", u32 version, u64 header length, JSON header (config, progress,
/// tensor index, payload CRC32), then little-endian f32 tensor data.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointError for a bad magic, version mismatch, truncation,
/// checksum failure or a missing/misshapen tensor (named in the message).
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Inference.

/// Root-relative 3D prediction (T x J x 3, mm) for a pose2d clip. The clip is
/// cut into windows of config.frames, edge padded, and the padding dropped.
Tensor<double> predict_clip(const ParamSet<float>& params, const ModelConfig& config,
                            const data::PoseClip& input);

/// Protocol-1 error over every clip, prediction against the root-relative target.
double dataset_mpjpe(const ParamSet<float>& params, const ModelConfig& config,
                     const std::vector<data::ClipPair>& clips);

// Training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double l_p = 0;
  double l_delta = 0;
  double total = 0;
  std::optional<double> eval_mpjpe_mm;
  std::size_t steps = 0;

  std::string to_json_line() const;
};

struct StepStats {
  LossValues loss;
  double grad_norm = 0;
};

class Trainer {
 public:
  /// Fresh run: weights from config.trainer.init_seed.
  Trainer(RunConfig config, std::vector<data::ClipPair> train, std::vector<data::ClipPair> eval);
  /// Continues from a checkpoint that carries optimizer state.
  Trainer(const Checkpoint& ckpt, std::vector<data::ClipPair> train,
          std::vector<data::ClipPair> eval);

  struct Options {
    std::filesystem::path checkpoint;  // written at each epoch end and at the stop; empty = none
    std::filesystem::path log;         // JSON lines appended per epoch; empty = none
    /// Stop after this many further steps (on top of trainer.max_steps).
    std::optional<std::size_t> stop_after;
    std::function<void(const EpochRecord&)> on_epoch;
  };

  /// Trains until the configured epochs or step limit are reached. On a
  /// non-finite loss or gradient, throws DivergenceError and leaves the last
  /// checkpoint file untouched.
  std::vector<EpochRecord> run(const Options& options);

  /// One optimizer step on a batch at the current epoch's rate.
  StepStats step(const data::Batch& batch);

  const ParamSet<float>& params() const { return params_; }
  const TrainProgress& progress() const { return progress_; }
  const RunConfig& config() const { return config_; }
  Checkpoint checkpoint() const;
  bool finished() const;

 private:
  bool step_limit_reached() const;

  RunConfig config_;
  std::vector<data::ClipPair> train_;
  std::vector<data::ClipPair> eval_;
  ParamSet<float> params_;
  AdamWState<float> opt_;
  TrainProgress progress_;
};

}  // namespace ssrstf
