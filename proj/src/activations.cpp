#include "satlab/activations.hpp"

#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>

#include "satlab/errors.hpp"

namespace sat {

namespace {

constexpr std::array<std::pair<ActivationKind, std::string_view>, 8> kNames{{
    {ActivationKind::ReLU, "relu"},
    {ActivationKind::Softplus, "softplus"},
    {ActivationKind::ParametricSoftplus, "psoftplus"},
    {ActivationKind::SiLU, "silu"},
    {ActivationKind::GELU, "gelu"},
    {ActivationKind::ELU, "elu"},
    {ActivationKind::CELU, "celu"},
    {ActivationKind::SmoothReLU, "smoothrelu"},
}};

// ln(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

}  // namespace

std::string_view to_string(ActivationKind kind) noexcept {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

ActivationKind parse_activation_kind(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw ValueError("unknown activation '" + std::string(name) + "'");
}

bool has_alpha(ActivationKind kind) noexcept {
  switch (kind) {
    case ActivationKind::ParametricSoftplus:
    case ActivationKind::ELU:
    case ActivationKind::CELU:
    case ActivationKind::SmoothReLU: return true;
    default: return false;
  }
}

double default_alpha(ActivationKind kind) noexcept {
  switch (kind) {
    case ActivationKind::ParametricSoftplus: return 10.0;
    case ActivationKind::ELU:
    case ActivationKind::CELU: return 1.0;
    case ActivationKind::SmoothReLU: return 400.0;
    default: return 0.0;
  }
}

Activation Activation::make(ActivationKind kind, std::optional<double> alpha) {
  if (alpha && !has_alpha(kind))
    throw ValueError(std::string(to_string(kind)) + " takes no alpha");
  Activation a{kind, alpha.value_or(default_alpha(kind))};
  a.validate();
  return a;
}

Activation Activation::parse(std::string_view name, std::optional<double> alpha) {
  return make(parse_activation_kind(name), alpha);
}

void Activation::validate() const {
  if (has_alpha(kind) && !(alpha > 0.0 && std::isfinite(alpha)))
    throw ValueError(std::string(to_string(kind)) + ": alpha must be positive, got " +
                     std::to_string(alpha));
}

std::string Activation::label() const {
  std::string out(to_string(kind));
  if (has_alpha(kind)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "(alpha=%g)", alpha);
    out += buf;
  }
  return out;
}

Activation Activation::with_alpha(double a) const {
  Activation out{kind, a};
  out.validate();
  return out;
}

double activation_value(const Activation& act, double x) {
  const double a = act.alpha;
  switch (act.kind) {
    case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::Softplus: return softplus(x);
    case ActivationKind::ParametricSoftplus: return softplus(a * x) / a;
    case ActivationKind::SiLU: return x * sigmoid(x);
    case ActivationKind::GELU: return x * normal_cdf(x);
    case ActivationKind::ELU: return x >= 0.0 ? x : a * std::expm1(x);
    case ActivationKind::CELU: return x >= 0.0 ? x : a * std::expm1(x / a);
    case ActivationKind::SmoothReLU: return x >= 0.0 ? x - std::log1p(a * x) / a : 0.0;
  }
  return 0.0;
}

double activation_derivative(const Activation& act, double x) {
  const double a = act.alpha;
  switch (act.kind) {
    case ActivationKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Softplus: return sigmoid(x);
    case ActivationKind::ParametricSoftplus: return sigmoid(a * x);
    case ActivationKind::SiLU: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case ActivationKind::GELU: return normal_cdf(x) + x * normal_pdf(x);
    case ActivationKind::ELU: return x >= 0.0 ? 1.0 : a * std::exp(x);
    case ActivationKind::CELU: return x >= 0.0 ? 1.0 : std::exp(x / a);
    case ActivationKind::SmoothReLU: return x >= 0.0 ? a * x / (1.0 + a * x) : 0.0;
  }
  return 0.0;
}

double smoothrelu_alpha_gradient(double alpha, double x) {
  if (!(alpha > 0.0)) throw ValueError("smoothrelu: alpha must be positive");
  if (x <= 0.0) return 0.0;
  const double ax = alpha * x;
  return (std::log1p(ax) - ax / (1.0 + ax)) / (alpha * alpha);
}

namespace {
template <class F>
Tensor map_tensor(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}
}  // namespace

Tensor act_forward(const Activation& act, const Tensor& x) {
  act.validate();
  return map_tensor(x, [&](double v) { return activation_value(act, v); });
}

Tensor act_derivative(const Activation& act, const Tensor& x) {
  act.validate();
  return map_tensor(x, [&](double v) { return activation_derivative(act, v); });
}

Tensor act_alpha_gradient(double alpha, const Tensor& x) {
  if (!(alpha > 0.0)) throw ValueError("smoothrelu: alpha must be positive");
  return map_tensor(x, [&](double v) { return smoothrelu_alpha_gradient(alpha, v); });
}

SmoothnessReport smoothness_report(const Activation& act) {
  act.validate();
  SmoothnessReport r{act};
  // One-sided limits of the branch formulas at 0.
  switch (act.kind) {
    case ActivationKind::ReLU:
      r.left_limit = 0.0;
      r.right_limit = 1.0;
      break;
    case ActivationKind::ELU:
      r.left_limit = act.alpha * std::exp(0.0);
      r.right_limit = 1.0;
      break;
    case ActivationKind::CELU:
      r.left_limit = std::exp(0.0 / act.alpha);
      r.right_limit = 1.0;
      break;
    case ActivationKind::SmoothReLU:
      r.left_limit = 0.0;
      r.right_limit = act.alpha * 0.0 / (1.0 + act.alpha * 0.0);
      break;
    default:
      // Single closed-form expression, continuous at 0.
      r.left_limit = activation_derivative(act, 0.0);
      r.right_limit = r.left_limit;
      break;
  }
  r.jump = std::abs(r.right_limit - r.left_limit);
  r.left_estimate = activation_derivative(act, -1e-8);
  r.right_estimate = activation_derivative(act, 1e-8);
  return r;
}

Var activate(Var x, const ActivationPair& pair, std::optional<Var> alpha) {
  pair.forward.validate();
  pair.backward.validate();
  Activation fwd = pair.forward;
  Activation bwd = pair.backward;
  if (alpha) {
    if (alpha->value().size() != 1)
      throw ShapeError("activate: alpha must hold one element, got " +
                       shape_string(alpha->shape()));
    const double a = alpha->value()[0];
    if (fwd.kind == ActivationKind::SmoothReLU) fwd = fwd.with_alpha(a);
    if (bwd.kind == ActivationKind::SmoothReLU) bwd = bwd.with_alpha(a);
  }

  Tensor out = act_forward(fwd, x.value());
  Graph* g = &x.graph();
  const NodeId ix = x.id();
  std::vector<Var> inputs{x};
  if (alpha) inputs.push_back(*alpha);
  const bool alpha_grad = alpha && bwd.kind == ActivationKind::SmoothReLU;

  return g->record(OpKind::Activation, std::move(inputs), std::move(out),
                   [g, ix, bwd, alpha_grad, has_alpha_input = alpha.has_value()](const Tensor& grad) {
                     const Tensor& pre = g->value(ix);
                     Tensor gx(pre.shape());
                     for (std::size_t i = 0; i < pre.size(); ++i)
                       gx[i] = grad[i] * activation_derivative(bwd, pre[i]);
                     std::vector<Tensor> grads{std::move(gx)};
                     if (has_alpha_input) {
                       Tensor ga({1});
                       if (alpha_grad)
                         for (std::size_t i = 0; i < pre.size(); ++i)
                           ga[0] += grad[i] * smoothrelu_alpha_gradient(bwd.alpha, pre[i]);
                       grads.push_back(std::move(ga));
                     }
                     return grads;
                   });
}

}  // namespace sat
