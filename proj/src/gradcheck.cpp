#include "satlab/gradcheck.hpp"

#include <cmath>
#include <cstdio>

namespace sat {

std::vector<Activation> derivative_suite_activations() {
  std::vector<Activation> out{Activation::relu(), Activation::softplus(), Activation::silu(),
                              Activation::gelu()};
  for (double a : {1.0, 10.0, 100.0}) out.push_back(Activation::psoftplus(a));
  for (double a : {1.0, 1.2, 1.4, 1.6, 1.8, 2.0}) out.push_back(Activation::elu(a));
  for (double a : {1.0, 1.2, 1.4, 1.6, 1.8, 2.0}) out.push_back(Activation::celu(a));
  for (double a : {1.0, 10.0, 100.0, 400.0}) out.push_back(Activation::smoothrelu(a));
  return out;
}

std::vector<Activation> smoothness_suite_activations() {
  std::vector<Activation> out{Activation::relu(), Activation::softplus(), Activation::psoftplus(10.0),
                              Activation::silu(), Activation::gelu(), Activation::smoothrelu(400.0)};
  for (double a : {1.0, 1.2, 1.4, 1.6, 1.8, 2.0}) out.push_back(Activation::elu(a));
  for (double a : {1.0, 1.2, 1.4, 1.6, 1.8, 2.0}) out.push_back(Activation::celu(a));
  return out;
}

std::vector<double> derivative_grid(std::size_t points) {
  std::vector<double> xs(points);
  for (std::size_t i = 0; i < points; ++i)
    xs[i] = -5.0 + 10.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(points);
  return xs;
}

DerivativeCheck check_derivative(const Activation& act, double tolerance, double h,
                                 const DerivativeFn& derivative) {
  const bool kinked = act.kind == ActivationKind::ReLU ||
                      (act.kind == ActivationKind::ELU && act.alpha != 1.0);
  DerivativeCheck c{act};
  for (double x : derivative_grid()) {
    if (kinked && std::abs(x) < 1e-6) continue;
    const double fd = (activation_value(act, x + h) - activation_value(act, x - h)) / (2.0 * h);
    const double an = derivative ? derivative(act, x) : activation_derivative(act, x);
    const double den = std::max(std::abs(fd), std::abs(an));
    const double err = den == 0.0 ? 0.0 : std::abs(fd - an) / den;
    if (!std::isfinite(err) || err > c.max_relative_error) {
      c.max_relative_error = std::isfinite(err) ? err : INFINITY;
      c.worst_x = x;
    }
    ++c.points;
  }
  c.pass = c.max_relative_error < tolerance;
  return c;
}

std::string GradcheckSummary::table() const {
  std::string out = "activation                    points  max_rel_err   x_worst  status\n";
  char buf[160];
  for (const auto& d : derivatives) {
    std::snprintf(buf, sizeof buf, "%-28s %7zu  %11.3e  %8.4f  %s\n", d.activation.label().c_str(),
                  d.points, d.max_relative_error, d.worst_x, d.pass ? "ok" : "FAIL");
    out += buf;
  }
  out += "\nactivation                    d/dx(0-)   d/dx(0+)   jump\n";
  for (const auto& s : smoothness) {
    std::snprintf(buf, sizeof buf, "%-28s %9.6f  %9.6f  %9.6f\n", s.kind.label().c_str(), s.left_limit,
                  s.right_limit, s.jump);
    out += buf;
  }
  return out;
}

GradcheckSummary run_gradcheck(std::optional<ActivationKind> fault, double tolerance) {
  GradcheckSummary s;
  const DerivativeFn faulty = [&](const Activation& a, double x) {
    const double d = activation_derivative(a, x);
    return fault && a.kind == *fault ? d * (1.0 + 1e-4) : d;
  };
  for (const auto& act : derivative_suite_activations()) {
    s.derivatives.push_back(check_derivative(act, tolerance, 1e-6, fault ? faulty : DerivativeFn{}));
    s.pass = s.pass && s.derivatives.back().pass;
  }
  for (const auto& act : smoothness_suite_activations()) s.smoothness.push_back(smoothness_report(act));
  return s;
}

}  // namespace sat
