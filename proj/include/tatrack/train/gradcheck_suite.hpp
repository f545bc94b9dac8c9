#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "tatrack/core/gradcheck.hpp"

namespace tatrack::train {

using core::Var;

/// A differentiable op wrapped as a scalar function of random leaves.
struct GradCheckCase {
  std::string name;
  // Builds leaves and the scalar loss closure for a given generator state.
  std::function<void(std::mt19937_64&, std::vector<Var<double>>&, std::function<Var<double>()>&)> build;
};

/// Every differentiable tensor op plus the regression and focal losses, each
/// projected onto a scalar with fixed random weights.
std::vector<GradCheckCase> op_gradcheck_cases();

/// Gradient of the total tracking loss through the dual-branch forward pass
/// at C=16, L=2, h=2 with one STI layer, with respect to every trainable
/// prompt-side parameter.
core::GradCheckResult total_loss_gradcheck(uint64_t seed);

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

struct GradCheckSummary {
  double worst_op_error = 0;
  std::string worst_op;
  double worst_model_error = 0;
  std::string worst_model_input;
  int seeds = 0;
  bool passed() const { return worst_op_error < kOpTolerance && worst_model_error < kModelTolerance; }
};

/// Runs every op case and the total-loss check for `seeds` seeds. One line per
/// check goes to `log` when given.
GradCheckSummary run_gradcheck_suite(int seeds, std::ostream* log = nullptr);

}  // namespace tatrack::train
