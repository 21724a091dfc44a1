#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grada {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   ///< error or statistic that was compared
  double tolerance = 0.0;  ///< pass threshold for `measured`
};

/// Numeric self-checks: finite-difference gradients of every primitive and
/// loss, nuclear-norm gradient, gradient-reversal sign, SVD reconstruction,
/// closed-form KL against Monte Carlo, augmentation statistics and the
/// prediction-matrix correlation identities.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 7);

}  // namespace grada
