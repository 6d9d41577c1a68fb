#pragma once

// Named self-checks grouped into suites, shared by the CLI `verify` command
// and the acceptance runner.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ssrstf::verify {

struct SuiteOptions {
  /// Run the equivalence checks in double precision (gradient checks always are).
  bool f64 = false;
  /// Perturb one tap of every composed kernel before comparing; the cascade
  /// equivalence check must then fail.
  bool tamper = false;
  std::uint64_t seed = 2024;
};

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double measured = 0;  // worst observed deviation / error / count
  double limit = 0;     // the bound it is held to
  std::string detail;
  double seconds = 0;
};

struct CheckInfo {
  std::string suite;
  std::string name;
  std::string description;
  std::function<CheckResult(const SuiteOptions&)> run;
};

/// Every check, in suite order.
const std::vector<CheckInfo>& registry();

/// "grad", "equiv", "metrics".
std::vector<std::string> suite_names();

/// Runs one check by name; throws std::invalid_argument for an unknown name.
CheckResult run_check(const std::string& name, const SuiteOptions& options = {});

/// Runs a suite, or every suite for "all". Throws std::invalid_argument for an
/// unknown suite. A check that throws is reported as failed with the message.
std::vector<CheckResult> run_suite(const std::string& suite, const SuiteOptions& options = {});

bool all_passed(const std::vector<CheckResult>& results);

/// {"passed": bool, "checks": [{suite, name, passed, measured, limit, detail, seconds}]}
std::string results_json(const std::vector<CheckResult>& results);

}  // namespace ssrstf::verify
