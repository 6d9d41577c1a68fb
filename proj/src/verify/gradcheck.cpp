#include "ssrstf/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ssrstf::verify {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// Rounding error of a loss evaluation, in units of the loss's last place.
constexpr double kRoundingUlps = 16;

double evaluate(const LossFn& fn, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return fn(tape, vars).value()[0];
}

}  // namespace

GradCheckResult check_gradients(const LossFn& fn, const std::vector<Tensor<double>>& inputs,
                                const GradCheckOptions& options) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    auto loss = fn(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }

  Rng rng(options.seed);
  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> elements(inputs[k].size());
    std::iota(elements.begin(), elements.end(), 0);
    if (options.samples_per_input && options.samples_per_input < elements.size()) {
      std::shuffle(elements.begin(), elements.end(), rng);
      elements.resize(options.samples_per_input);
    }
    for (auto e : elements) {
      const double original = probe[k][e];
      probe[k][e] = original + options.step;
      const double plus = evaluate(fn, probe);
      probe[k][e] = original - options.step;
      const double minus = evaluate(fn, probe);
      probe[k][e] = original;
      const double numeric = (plus - minus) / (2 * options.step);
      // The difference quotient cannot resolve gradients below the rounding
      // noise of the loss itself; compare those on an absolute scale.
      double floor = options.floor;
      if (options.rounding_floor) {
        const double noise = kRoundingUlps * std::numeric_limits<double>::epsilon() *
                             std::max(std::abs(plus), std::abs(minus)) / (2 * options.step);
        floor = std::max(floor, noise / options.tolerance);
      }
      const double err = relative_error(analytic[k][e], numeric, floor);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "input[" + std::to_string(k) + "] element " + std::to_string(e);
      }
    }
  }
  result.passed = result.max_rel_error <= options.tolerance;
  return result;
}

}  // namespace ssrstf::verify
