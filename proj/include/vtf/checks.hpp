#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vtf::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // worst observed error or failure message
};

struct CheckOptions {
  std::uint64_t seed = 1;
  int trials = 50;
};

/// Randomised invariant/property checks over the kernels, manifold operators,
/// solver and GMM problem. Used by `vtf-rlbfgs check`.
std::vector<CheckResult> run_checks(const CheckOptions& options = {});

}  // namespace vtf::checks
