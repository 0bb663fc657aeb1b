#pragma once

// Self-checks shared by `holotile oracle-check` and the test suites: the
// propagation operator against a direct DFT, adjoint/unitarity identities,
// tiling bijections, SIMD kernels against the scalar reference, and analytic
// gradients against central finite differences.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "holotile/autodiff.hpp"

namespace holotile::oracle {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0;   // worst error observed
  double tolerance = 0;  // pass iff measured < tolerance
  std::string detail;
};

using LossBuilder =
    std::function<ad::Tensor<double>(ad::Tape<double>&, const std::vector<ad::Tensor<double>>&)>;

struct GradientOptions {
  double step = 1e-6;
  /// Checks at most this many elements per input (chosen by `seed`); 0 = all.
  std::size_t max_elements = 0;
  std::uint64_t seed = 0;
  /// One norm over all inputs instead of the worst per-input ratio.
  bool combined = false;
};

/// Worst norm-wise relative error ||g - g_fd|| / max(||g||, ||g_fd||, 1e-12)
/// over the inputs (or over their concatenation when `combined`), where g comes from Tape::backward and g_fd from central
/// differences. Inputs must be leaves that require gradients.
double gradient_error(const LossBuilder& loss, const std::vector<ad::Tensor<double>>& inputs,
                      const GradientOptions& opt = {});

CheckResult check_propagation_dft();
CheckResult check_adjoint();
CheckResult check_unitarity();
CheckResult check_round_trip();
CheckResult check_tiling();
CheckResult check_kernels();
/// Every autodiff op, `seeds` random draws each.
std::vector<CheckResult> check_op_gradients(int seeds);
CheckResult check_pipeline_gradient(int seeds);

/// All of the above in a fixed order.
std::vector<CheckResult> run_all(int gradient_seeds = 3);

}  // namespace holotile::oracle
