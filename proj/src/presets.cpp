#include "impulse/presets.hpp"

#include <cmath>

namespace ic {

namespace {

ConeSpec half_line_cone() {
  ConeSpec cone;
  cone.dimension = 1;
  Vec g = vzero();
  g[0] = 1.0;
  cone.generators = {g};
  cone.size_cap = 5.0;
  return cone;
}

CoefficientFamily constant(double c) {
  CoefficientFamily f;
  f.kind = Form::Constant;
  f.params = {c};
  return f;
}

// No drift, unit noise, zero running cost: the value function is the heat
// semigroup applied to h(x) = 1 + cos x, and ell >= 3 keeps every impulse
// unprofitable (sup h = 2).
ProblemSpec heat_kernel() {
  ProblemSpec s;
  s.dim_state = 1;
  s.horizon = 1.0;
  s.tau0 = 0.0;
  s.drift = constant(0.0);
  s.diffusion = constant(1.0);
  s.running_cost = constant(0.0);
  s.terminal_cost.kind = Form::BoundedTrig;
  s.terminal_cost.params = {1.0, 1.0, 1.0, 0.0};  // 1 + cos(x)
  s.impulse_cost.kind = Form::PowerNorm;
  s.impulse_cost.params = {3.0, 3.0, 1.0};  // 3 (1 + |xi|)
  s.ell0 = 3.0;
  s.mu = 1.0;
  s.cone = half_line_cone();
  return s;
}

// Mean-reverting state with a running cost peaked at the origin; pushing the
// state to the right is cheap enough that the intervention region is
// nonempty for small x. The impulse price decays in tau.
ProblemSpec impulse_active() {
  ProblemSpec s;
  s.dim_state = 1;
  s.horizon = 1.0;
  s.tau0 = 0.0;
  s.drift.kind = Form::AffineInX;
  s.drift.params = {0.0, -0.5};
  s.diffusion = constant(0.3);
  s.running_cost.kind = Form::BoundedRational;
  s.running_cost.params = {4.0, 0.0};  // 4 / (1 + x^2)
  s.terminal_cost.kind = Form::BoundedRational;
  s.terminal_cost.params = {2.0, 0.0};
  s.impulse_cost.kind = Form::PowerNorm;
  s.impulse_cost.params = {0.1, 0.1, 1.0};
  s.impulse_cost.tau_kind = TauForm::Affine;
  s.impulse_cost.tau_params = {1.0, -0.2};  // (0.1 - 0.02 tau)(1 + |xi|)
  s.ell0 = 0.08;
  s.mu = 1.0;
  s.cone = half_line_cone();
  return s;
}

// Bounded-coefficient borrowing scenario: each impulse (a new loan tranche)
// adds a drift copy and a running-cost copy whose weight decays with the
// tranche date.
ProblemSpec loan() {
  ProblemSpec s;
  s.dim_state = 1;
  s.horizon = 1.0;
  s.tau0 = 0.0;
  s.drift.kind = Form::BoundedTrig;
  s.drift.params = {0.2, 0.1, 1.0, 0.0};  // 0.2 + 0.1 cos(x)
  s.diffusion = constant(0.25);
  s.running_cost.kind = Form::BoundedTrig;
  s.running_cost.params = {0.5, 0.3, 0.8, 0.0};
  s.running_cost.tau_kind = TauForm::Affine;
  s.running_cost.tau_params = {1.0, -0.3};
  s.terminal_cost.kind = Form::BoundedRational;
  s.terminal_cost.params = {1.5, 0.0};
  s.impulse_cost.kind = Form::PowerNorm;
  s.impulse_cost.params = {0.5, 0.4, 1.0};
  s.impulse_cost.tau_kind = TauForm::Affine;
  s.impulse_cost.tau_params = {1.0, -0.1};
  s.ell0 = 0.3;
  s.mu = 1.0;
  s.cone = half_line_cone();
  return s;
}

// Constant b and sigma (so B_x = Sigma_x = 0), constant g, tau-independent
// everything: the adjoint equations have closed-form solutions and the
// stationarity scores vanish identically.
ProblemSpec linear_adjoint() {
  ProblemSpec s;
  s.dim_state = 1;
  s.horizon = 1.0;
  s.tau0 = 0.0;
  s.drift = constant(0.05);
  s.diffusion = constant(0.3);
  s.running_cost = constant(0.4);
  s.terminal_cost.kind = Form::BoundedTrig;
  s.terminal_cost.params = {1.0, 0.5, 1.0, 0.0};  // 1 + 0.5 cos(x)
  s.impulse_cost.kind = Form::PowerNorm;
  s.impulse_cost.params = {0.5, 0.5, 1.0};
  s.ell0 = 0.5;
  s.mu = 1.0;
  s.cone = half_line_cone();
  return s;
}

}  // namespace

ProblemSpec make_preset(const std::string& name) {
  if (name == "heat-kernel") return heat_kernel();
  if (name == "impulse-active") return impulse_active();
  if (name == "loan") return loan();
  if (name == "linear-adjoint") return linear_adjoint();
  throw IcError("unknown preset: " + name);
}

std::vector<std::string> preset_names() {
  return {"heat-kernel", "impulse-active", "loan", "linear-adjoint"};
}

double heat_kernel_value(double t, double x, double T) {
  return 1.0 + std::cos(x) * std::exp(-0.5 * (T - t));
}

}  // namespace ic
