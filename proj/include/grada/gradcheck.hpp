#pragma once

#include <functional>
#include <span>
#include <vector>

#include "grada/autodiff.hpp"

namespace grada {

/// Builds a scalar on `tape` from variables holding the given inputs.
using ScalarFn = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> inputs)>;

struct GradCheckResult {
  /// ‖g_autodiff − g_fd‖₂ / max(‖g_autodiff‖₂, ‖g_fd‖₂) over all inputs.
  double relative_error = 0.0;
  double max_abs_error = 0.0;
};

/// Compares reverse-mode gradients against central differences with step h.
GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace grada
