#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "satlab/activations.hpp"

namespace sat {

/// Every kind with each shape parameter the suite exercises.
std::vector<Activation> derivative_suite_activations();
/// Kinds reported in the smoothness table (ELU/CELU over alpha 1.0 ... 2.0).
std::vector<Activation> smoothness_suite_activations();

/// 1000 midpoints of equal cells covering [-5, 5]; none lies within 1e-6 of 0.
std::vector<double> derivative_grid(std::size_t points = 1000);

struct DerivativeCheck {
  Activation activation;
  std::size_t points = 0;
  double max_relative_error = 0.0;
  double worst_x = 0.0;
  bool pass = false;
};

using DerivativeFn = std::function<double(const Activation&, double)>;

/// Analytic derivative (or `derivative` when given) against central
/// differences of activation_value with step h. Points with |x| < 1e-6 are
/// skipped for kinds that are not C1 (relu, elu with alpha != 1).
DerivativeCheck check_derivative(const Activation& act, double tolerance = 1e-7, double h = 1e-6,
                                 const DerivativeFn& derivative = {});

struct GradcheckSummary {
  std::vector<DerivativeCheck> derivatives;
  std::vector<SmoothnessReport> smoothness;
  bool pass = true;
  /// Plain-text table for terminals.
  std::string table() const;
};

/// Runs the whole activation suite. With `fault`, that kind's analytic
/// derivative is scaled by (1 + 1e-4) to prove the checker can fail.
GradcheckSummary run_gradcheck(std::optional<ActivationKind> fault = std::nullopt,
                               double tolerance = 1e-7);

}  // namespace sat
