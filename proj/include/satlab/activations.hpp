#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "satlab/autodiff.hpp"
#include "satlab/tensor.hpp"

namespace sat {

enum class ActivationKind { ReLU, Softplus, ParametricSoftplus, SiLU, GELU, ELU, CELU, SmoothReLU };

/// Lowercase config name: relu, softplus, psoftplus, silu, gelu, elu, celu, smoothrelu.
std::string_view to_string(ActivationKind kind) noexcept;
ActivationKind parse_activation_kind(std::string_view name);

bool has_alpha(ActivationKind kind) noexcept;
double default_alpha(ActivationKind kind) noexcept;

/// An activation kind together with its shape parameter. Kinds without a
/// parameter carry alpha = 0 and ignore it.
struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double alpha = 0.0;

  /// Validating constructor; alpha defaults per kind (psoftplus 10, elu 1,
  /// celu 1, smoothrelu 400). Rejects alpha <= 0 and alpha on kinds
  /// that take none.
  static Activation make(ActivationKind kind, std::optional<double> alpha = std::nullopt);
  static Activation parse(std::string_view name, std::optional<double> alpha = std::nullopt);

  static Activation relu() { return make(ActivationKind::ReLU); }
  static Activation softplus() { return make(ActivationKind::Softplus); }
  static Activation psoftplus(double a = 10.0) { return make(ActivationKind::ParametricSoftplus, a); }
  static Activation silu() { return make(ActivationKind::SiLU); }
  static Activation gelu() { return make(ActivationKind::GELU); }
  static Activation elu(double a = 1.0) { return make(ActivationKind::ELU, a); }
  static Activation celu(double a = 1.0) { return make(ActivationKind::CELU, a); }
  static Activation smoothrelu(double a = 400.0) { return make(ActivationKind::SmoothReLU, a); }

  /// Throws ValueError unless alpha is valid for the kind.
  void validate() const;
  /// "psoftplus(alpha=10)" style label.
  std::string label() const;
  /// Same kind, different alpha (used for the learnable SmoothReLU alpha).
  Activation with_alpha(double a) const;

  friend bool operator==(const Activation&, const Activation&) = default;
};

/// Forward function and the function whose derivative drives the backward
/// pass. Both are evaluated at the same pre-activation.
struct ActivationPair {
  Activation forward;
  Activation backward;

  static ActivationPair same(const Activation& a) { return {a, a}; }
  friend bool operator==(const ActivationPair&, const ActivationPair&) = default;
};

// Scalar kernels.
double activation_value(const Activation& act, double x);
/// ReLU'(0) is 0.
double activation_derivative(const Activation& act, double x);
/// d SmoothReLU(x, alpha) / d alpha; zero for x <= 0.
double smoothrelu_alpha_gradient(double alpha, double x);

Tensor act_forward(const Activation& act, const Tensor& x);
Tensor act_derivative(const Activation& act, const Tensor& x);
/// Per-element d/d alpha of SmoothReLU.
Tensor act_alpha_gradient(double alpha, const Tensor& x);

struct SmoothnessReport {
  Activation kind;
  double left_limit = 0.0;   ///< analytic derivative limit at 0-
  double right_limit = 0.0;  ///< analytic derivative limit at 0+
  double jump = 0.0;         ///< |right_limit - left_limit|
  double left_estimate = 0.0;   ///< derivative evaluated at -1e-8
  double right_estimate = 0.0;  ///< derivative evaluated at +1e-8
};

SmoothnessReport smoothness_report(const Activation& act);

/// Graph op applying pair.forward to x, with backward driven by
/// pair.backward' at the stored pre-activations.
///
/// `alpha`, when given, is a one-element node holding a learnable alpha. It
/// replaces the configured alpha of whichever side is SmoothReLU, and it
/// receives a gradient only when pair.backward is SmoothReLU.
Var activate(Var x, const ActivationPair& pair, std::optional<Var> alpha = std::nullopt);

}  // namespace sat
