#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssrstf/conv.hpp"
#include "ssrstf/params.hpp"
#include "ssrstf/ssrformer.hpp"
#include "ssrstf/stformer.hpp"

namespace ssrstf {

enum class LossReduction { mean, sum };

struct ModelConfig {
  std::size_t depth = 12;      // N dual-stream blocks
  std::size_t channels = 256;  // C
  std::size_t hidden = 512;    // C_h, motion representation width
  std::size_t frames = 243;    // T used for training windows
  std::size_t joints = 17;     // J
  SSRAKernelSpec kernel{};     // {35,3,11,2}
  std::size_t heads = 8;
  std::size_t mlp_ratio = 4;
  double lambda_velocity = 1.0;
  bool literal_sigma = true;
  LossReduction reduction = LossReduction::mean;
  /// Regression-head outputs are multiplied by this factor to give millimetres.
  double output_scale_mm = 1000.0;

  static ModelConfig base();
  static ModelConfig small();

  /// Every violated constraint, in a stable order; empty when valid.
  std::vector<std::string> problems() const;
  /// Throws std::invalid_argument listing all problems.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weights of one dual-stream block bound to a tape.
template <typename T>
struct DualStreamWeights {
  SSRBlockWeights<T> spatial;   // local stream, long kernel axis along joints
  SSRBlockWeights<T> temporal;  // local stream, long kernel axis along frames
  STBlockWeights<T> global_first;
  STBlockWeights<T> global_second;
  LinearWeights<T> fusion;  // 2C -> 2 stream logits per position
};

template <typename T>
struct ModelOutput {
  Var<T> motion;  // E, batch x T x J x C_h, tanh range
  Var<T> pose;    // batch x T x J x 3, millimetres
};

/// Initializes every parameter of the model; deterministic in `seed`.
template <typename T>
ParamSet<T> init_weights(const ModelConfig& config, std::uint64_t seed);

/// Throws std::invalid_argument naming the first parameter that is missing,
/// unexpected, or of the wrong shape for `config`.
template <typename T>
void check_weights(const ParamSet<T>& params, const ModelConfig& config);

std::string block_prefix(std::size_t index);

template <typename T>
DualStreamWeights<T> bind_block(const ParamBinding<T>& b, std::size_t index,
                                const ModelConfig& config);

/// F0 = Linear(x2d) + P_pos (broadcast over batch and frames). x2d is B x T x J x 3.
template <typename T>
Var<T> embed(const Var<T>& x2d, const ParamBinding<T>& b, const ModelConfig& config);

/// Per-position stream weights softmax(W Concat(F_L, F_G)), shape B x T x J x 2.
template <typename T>
Var<T> fusion_weights(const Var<T>& local, const Var<T>& global, const LinearWeights<T>& fusion);

/// alpha_L * F_L + alpha_G * F_G with the weights broadcast over channels.
template <typename T>
Var<T> fuse(const Var<T>& local, const Var<T>& global, const LinearWeights<T>& fusion);

template <typename T>
Var<T> dual_stream_block(const Var<T>& f, const DualStreamWeights<T>& w, const ModelConfig& config);

template <typename T>
ModelOutput<T> forward(const Var<T>& x2d, const ParamBinding<T>& b, const ModelConfig& config);

// Losses (millimetres). "sum" follows the per-clip sums literally; "mean"
// divides by the number of summed joint terms.
template <typename T>
Var<T> loss_position(const Var<T>& pred, const Var<T>& gt, LossReduction reduction);
template <typename T>
Var<T> loss_velocity(const Var<T>& pred, const Var<T>& gt, LossReduction reduction);

template <typename T>
struct LossTerms {
  Var<T> position;
  Var<T> velocity;
  Var<T> total;
};

struct LossValues {
  double position = 0;
  double velocity = 0;
  double total = 0;
};

/// total = L_P + lambda * L_delta; lambda must be non-negative.
template <typename T>
LossTerms<T> loss_total(const Var<T>& pred, const Var<T>& gt, double lambda,
                        LossReduction reduction);

template <typename T>
LossValues values_of(const LossTerms<T>& terms);

/// Exact number of scalars in the model's parameter set.
std::size_t param_count(const ModelConfig& config);
/// Scalars per component, in model order.
std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ModelConfig& config);

}  // namespace ssrstf
