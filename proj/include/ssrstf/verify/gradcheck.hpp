#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssrstf/autograd.hpp"
#include "ssrstf/params.hpp"

namespace ssrstf::verify {

/// Builds a scalar loss from leaf variables bound to the given tape.
using LossFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double step = 1e-5;        // central-difference step
  double tolerance = 1e-4;   // relative error bound
  double floor = 1e-6;       // denominator floor for near-zero gradients
  /// Raise the floor so that differences at the rounding noise of the loss
  /// (16 ulp of |loss| over the step) stay within tolerance.
  bool rounding_floor = true;
  std::size_t samples_per_input = 0;  // 0 = every element
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel_error = 0;
  std::string worst;  // "input[i] element k"
  bool passed = true;
};

/// Compares reverse-mode gradients of `fn` against central finite differences
/// for every (or a sampled subset of every) input tensor.
GradCheckResult check_gradients(const LossFn& fn, const std::vector<Tensor<double>>& inputs,
                                const GradCheckOptions& options = {});

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

}  // namespace ssrstf::verify
