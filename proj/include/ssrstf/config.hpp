#pragma once

// Run configuration: model architecture, optimizer and schedule settings and
// the data location, stored as JSON with a strict schema.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssrstf/model.hpp"

namespace ssrstf {

/// Thrown with every schema violation listed, one per line.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::vector<std::string>& problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct TrainerSettings {
  std::size_t epochs = 90;
  std::size_t batch_size = 12;
  double lr = 6e-4;
  double lr_decay = 0.99;  // per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Global gradient-norm cap; 0 disables clipping.
  double clip_norm = 1.0;
  std::uint64_t seed = 0;       // batch order
  std::uint64_t init_seed = 0;  // weight initialization
  bool shuffle = true;
  /// Stop after this many optimizer steps in total; 0 means no limit.
  std::size_t max_steps = 0;
  /// Evaluate every this many epochs; 0 disables evaluation.
  std::size_t eval_every = 1;

  std::vector<std::string> problems() const;
  friend bool operator==(const TrainerSettings&, const TrainerSettings&) = default;
};

struct RunConfig {
  /// "base", "small" or "custom"; informational once expanded.
  std::string preset = "custom";
  ModelConfig model;
  TrainerSettings trainer;
  std::string data_dir;  // may be empty when given on the command line

  /// Expands a preset name ("base" or "small").
  static RunConfig from_preset(const std::string& name);
  /// Parses JSON. A "preset" key fills the model defaults before any "model"
  /// keys override them. Unknown keys, wrong types and invalid values are all
  /// collected and reported together in a ConfigError.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string to_json() const;

  std::vector<std::string> problems() const;
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

}  // namespace ssrstf
