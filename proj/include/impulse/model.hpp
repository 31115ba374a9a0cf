#pragma once

// Problem data: coefficient registry, cone of admissible impulse sizes,
// problem spec, impulse controls, and the sampled assumption checks.

#include <optional>
#include <string>
#include <vector>

#include "impulse/common.hpp"

namespace ic {

// Functional forms available to drift/diffusion/cost coefficients. All are
// separable: value(tau, x) = tau_factor(tau) * shape(x). None depend on the
// running time t, which keeps closed-form derivatives trivial.
enum class Form {
  Constant,         // per component: c
  AffineInX,        // per component: a + b*x_i
  BoundedRational,  // per component: (a + b*x_i) / (1 + x_i^2)
  BoundedTrig,      // per component: a + b*cos(c*x_i + d)
  PowerNorm,        // scalar, argument is |v|: c0 + c1*|v|^mu  (impulse cost)
};

enum class TauForm {
  None,         // 1
  Affine,       // p + q*tau
  BoundedTrig,  // p + q*cos(r*tau)
};

struct CoefficientFamily {
  Form kind = Form::Constant;
  std::vector<double> params;  // grouped per output component, see eval_*
  TauForm tau_kind = TauForm::None;
  std::vector<double> tau_params;
};

int params_per_component(Form kind);

// tau factor and its derivative
double tau_factor(const CoefficientFamily& f, double tau);
double tau_factor_d(const CoefficientFamily& f, double tau);

// Vector-valued evaluation (drift/diffusion): component i depends on x_i
// only, so the Jacobian is diagonal and the second derivative tensor has a
// single nonzero slot (i,i,i) per component.
Vec eval_vec(const CoefficientFamily& f, int n, double tau, const Vec& x);
Vec eval_vec_dx(const CoefficientFamily& f, int n, double tau, const Vec& x);
Vec eval_vec_dxx(const CoefficientFamily& f, int n, double tau, const Vec& x);
Vec eval_vec_dtau(const CoefficientFamily& f, int n, double tau, const Vec& x);

// Scalar-valued evaluation (running/terminal cost): sum over components of
// the per-component shape. Gradient/Hessian are diagonal for the same reason.
double eval_scalar(const CoefficientFamily& f, int n, double tau, const Vec& x);
Vec eval_scalar_dx(const CoefficientFamily& f, int n, double tau, const Vec& x);
Vec eval_scalar_dxx(const CoefficientFamily& f, int n, double tau, const Vec& x);
double eval_scalar_dtau(const CoefficientFamily& f, int n, double tau,
                        const Vec& x);

struct ConeSpec {
  int dimension = 1;
  std::vector<Vec> generators;  // unit vectors
  double size_cap = 5.0;        // truncation radius for lattice search
};

enum class Semantics { Stacking, Frozen };

struct ProblemSpec {
  int dim_state = 1;
  double horizon = 1.0;
  double tau0 = 0.0;
  CoefficientFamily drift;
  CoefficientFamily diffusion;
  CoefficientFamily running_cost;
  CoefficientFamily terminal_cost;
  CoefficientFamily impulse_cost;  // PowerNorm over |xi|, times tau factor
  double ell0 = 0.0;               // declared lower-bound constant
  double mu = 1.0;                 // declared growth exponent in (0,1]
  ConeSpec cone;
  Semantics semantics = Semantics::Stacking;
};

// Impulse cost and its closed-form derivatives.
double impulse_cost(const ProblemSpec& spec, double tau, const Vec& xi);
double impulse_cost_dtau(const ProblemSpec& spec, double tau, const Vec& xi);
Vec impulse_cost_dxi(const ProblemSpec& spec, double tau, const Vec& xi);

struct Impulse {
  double time = 0.0;
  Vec size = vzero();
};

struct ImpulseControl {
  double start_time = 0.0;
  std::vector<Impulse> impulses;
};

struct AssumptionReport {
  bool finite_ok = false;         // all sampled evaluations finite
  bool nonneg_ok = false;         // g, h, ell >= 0 on samples
  bool ell_lower_ok = false;      // ell >= ell0 (1 + |xi|^mu)
  bool ell_monotone_ok = false;   // tau -> ell non-increasing
  bool subadditive_ok = false;    // strict subadditivity margin > 0
  bool lipschitz_ok = false;      // bounded difference ratios for b, sigma
  bool twice_diff_ok = false;     // closed-form vs FD second derivatives
  double lipschitz_K = 0.0;       // empirical K-hat
  double subadditivity_margin = 0.0;
  double sup_g = 0.0, sup_h = 0.0;
  std::vector<double> tau_modulus_gaps;     // probe gaps delta
  std::vector<double> tau_modulus_values;   // omega-hat(delta)
  std::string failure_detail;

  bool all_ok() const {
    return finite_ok && nonneg_ok && ell_lower_ok && ell_monotone_ok &&
           subadditive_ok && lipschitz_ok && twice_diff_ok;
  }
};

AssumptionReport validate_problem(const ProblemSpec& spec, int sample_count,
                                  std::uint64_t seed);

bool cone_contains(const ConeSpec& cone, const Vec& v);

std::vector<Vec> cone_grid(const ConeSpec& cone, int per_ray);

// Sorts, then rejects duplicates / out-of-window times / out-of-cone sizes.
ImpulseControl normalize_control(const std::vector<Impulse>& raw, double t,
                                 double T, const ConeSpec& cone);

}  // namespace ic
