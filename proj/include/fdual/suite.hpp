#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fdual {

struct SuiteOptions {
  std::uint64_t seed = 7;
  int count = 20;
  int max_depth = 3;
  int max_branch = 3;
  /// Flips the upper spread row of the root in the CPS program used for the
  /// superhedging price, so that the duality invariant must fail.
  bool inject_fault = false;
  double superhedge_tol = 1e-7;
  double cps_tol = 1e-9;
  double gap_tol = 1e-5;
  double identity_tol = 1e-6;
  double shadow_tol = 1e-6;
};

struct InvariantStats {
  std::string name;
  double tol = 0.0;
  int checked = 0;
  int failed = 0;
  /// Largest residual seen (the quantity compared with tol).
  double worst = 0.0;
};

struct SuiteFailure {
  int instance = 0;
  std::string invariant;
  double value = 0.0;
  std::string detail;
};

struct SuiteReport {
  int instances = 0;
  int instances_passed = 0;
  std::vector<InvariantStats> invariants;
  std::vector<SuiteFailure> failures;
  bool ok() const noexcept { return failures.empty(); }
};

/// Random instances with lambda cycling through {0.01, 0.1, 0.3}, each checked
/// against the CPS, superhedging, deflator, duality and shadow invariants.
SuiteReport run_suite(const SuiteOptions& opts);

}  // namespace fdual
