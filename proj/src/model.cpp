#include "impulse/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace ic {

int params_per_component(Form kind) {
  switch (kind) {
    case Form::Constant: return 1;
    case Form::AffineInX: return 2;
    case Form::BoundedRational: return 2;
    case Form::BoundedTrig: return 4;
    case Form::PowerNorm: return 3;
  }
  return 1;
}

double tau_factor(const CoefficientFamily& f, double tau) {
  switch (f.tau_kind) {
    case TauForm::None: return 1.0;
    case TauForm::Affine: return f.tau_params.at(0) + f.tau_params.at(1) * tau;
    case TauForm::BoundedTrig:
      return f.tau_params.at(0) +
             f.tau_params.at(1) * std::cos(f.tau_params.at(2) * tau);
  }
  return 1.0;
}

double tau_factor_d(const CoefficientFamily& f, double tau) {
  switch (f.tau_kind) {
    case TauForm::None: return 0.0;
    case TauForm::Affine: return f.tau_params.at(1);
    case TauForm::BoundedTrig:
      return -f.tau_params.at(1) * f.tau_params.at(2) *
             std::sin(f.tau_params.at(2) * tau);
  }
  return 0.0;
}

namespace {

const double* comp_params(const CoefficientFamily& f, int i) {
  int ppc = params_per_component(f.kind);
  std::size_t need = static_cast<std::size_t>(ppc) * (i + 1);
  if (f.params.size() < need)
    throw IcError("coefficient family: missing params for component " +
                  std::to_string(i));
  return f.params.data() + static_cast<std::size_t>(ppc) * i;
}

double shape(Form kind, const double* p, double x) {
  switch (kind) {
    case Form::Constant: return p[0];
    case Form::AffineInX: return p[0] + p[1] * x;
    case Form::BoundedRational: return (p[0] + p[1] * x) / (1.0 + x * x);
    case Form::BoundedTrig: return p[0] + p[1] * std::cos(p[2] * x + p[3]);
    case Form::PowerNorm:
      return p[0] + p[1] * std::pow(std::abs(x), p[2]);
  }
  return 0.0;
}

double shape_dx(Form kind, const double* p, double x) {
  switch (kind) {
    case Form::Constant: return 0.0;
    case Form::AffineInX: return p[1];
    case Form::BoundedRational: {
      double d = 1.0 + x * x;
      return (p[1] * d - (p[0] + p[1] * x) * 2.0 * x) / (d * d);
    }
    case Form::BoundedTrig: return -p[1] * p[2] * std::sin(p[2] * x + p[3]);
    case Form::PowerNorm: {
      double ax = std::abs(x);
      if (ax == 0.0) return 0.0;
      return p[1] * p[2] * std::pow(ax, p[2] - 1.0) * (x > 0 ? 1.0 : -1.0);
    }
  }
  return 0.0;
}

double shape_dxx(Form kind, const double* p, double x) {
  switch (kind) {
    case Form::Constant:
    case Form::AffineInX: return 0.0;
    case Form::BoundedRational: {
      double d = 1.0 + x * x;
      double num = p[0] + p[1] * x;
      // second derivative of num/d
      double d1 = 2.0 * x;
      double n1 = p[1];
      return (2.0 * num * d1 * d1 / (d * d * d)) - (2.0 * n1 * d1 + num * 2.0) / (d * d);
    }
    case Form::BoundedTrig:
      return -p[1] * p[2] * p[2] * std::cos(p[2] * x + p[3]);
    case Form::PowerNorm: {
      double ax = std::abs(x);
      if (ax == 0.0) return 0.0;
      return p[1] * p[2] * (p[2] - 1.0) * std::pow(ax, p[2] - 2.0);
    }
  }
  return 0.0;
}

}  // namespace

Vec eval_vec(const CoefficientFamily& f, int n, double tau, const Vec& x) {
  double s = tau_factor(f, tau);
  Vec r = vzero();
  for (int i = 0; i < n; ++i) r[i] = s * shape(f.kind, comp_params(f, i), x[i]);
  return r;
}

Vec eval_vec_dx(const CoefficientFamily& f, int n, double tau, const Vec& x) {
  double s = tau_factor(f, tau);
  Vec r = vzero();
  for (int i = 0; i < n; ++i)
    r[i] = s * shape_dx(f.kind, comp_params(f, i), x[i]);
  return r;
}

Vec eval_vec_dxx(const CoefficientFamily& f, int n, double tau, const Vec& x) {
  double s = tau_factor(f, tau);
  Vec r = vzero();
  for (int i = 0; i < n; ++i)
    r[i] = s * shape_dxx(f.kind, comp_params(f, i), x[i]);
  return r;
}

Vec eval_vec_dtau(const CoefficientFamily& f, int n, double tau, const Vec& x) {
  double sd = tau_factor_d(f, tau);
  Vec r = vzero();
  for (int i = 0; i < n; ++i)
    r[i] = sd * shape(f.kind, comp_params(f, i), x[i]);
  return r;
}

double eval_scalar(const CoefficientFamily& f, int n, double tau,
                   const Vec& x) {
  double s = tau_factor(f, tau);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += shape(f.kind, comp_params(f, i), x[i]);
  return s * acc;
}

Vec eval_scalar_dx(const CoefficientFamily& f, int n, double tau,
                   const Vec& x) {
  double s = tau_factor(f, tau);
  Vec r = vzero();
  for (int i = 0; i < n; ++i)
    r[i] = s * shape_dx(f.kind, comp_params(f, i), x[i]);
  return r;
}

Vec eval_scalar_dxx(const CoefficientFamily& f, int n, double tau,
                    const Vec& x) {
  double s = tau_factor(f, tau);
  Vec r = vzero();
  for (int i = 0; i < n; ++i)
    r[i] = s * shape_dxx(f.kind, comp_params(f, i), x[i]);
  return r;
}

double eval_scalar_dtau(const CoefficientFamily& f, int n, double tau,
                        const Vec& x) {
  double sd = tau_factor_d(f, tau);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += shape(f.kind, comp_params(f, i), x[i]);
  return sd * acc;
}

double impulse_cost(const ProblemSpec& spec, double tau, const Vec& xi) {
  const auto& f = spec.impulse_cost;
  const double* p = comp_params(f, 0);
  double m = vnorm(xi, spec.dim_state);
  return tau_factor(f, tau) * (p[0] + p[1] * std::pow(m, p[2]));
}

double impulse_cost_dtau(const ProblemSpec& spec, double tau, const Vec& xi) {
  const auto& f = spec.impulse_cost;
  const double* p = comp_params(f, 0);
  double m = vnorm(xi, spec.dim_state);
  return tau_factor_d(f, tau) * (p[0] + p[1] * std::pow(m, p[2]));
}

Vec impulse_cost_dxi(const ProblemSpec& spec, double tau, const Vec& xi) {
  const auto& f = spec.impulse_cost;
  const double* p = comp_params(f, 0);
  double m = vnorm(xi, spec.dim_state);
  Vec r = vzero();
  if (m == 0.0) return r;  // not differentiable at 0; callers avoid it
  double scale = tau_factor(f, tau) * p[1] * p[2] * std::pow(m, p[2] - 2.0);
  for (int i = 0; i < spec.dim_state; ++i) r[i] = scale * xi[i];
  return r;
}

bool cone_contains(const ConeSpec& cone, const Vec& v) {
  const int n = cone.dimension;
  const int m = static_cast<int>(cone.generators.size());
  if (m == 0) throw IcError("cone has no generators");
  if (vnorm(v, n) == 0.0) return true;

  // Nonnegative least squares (Lawson-Hanson active set) on the tiny system
  // G w = v, w >= 0; membership iff the residual is ~0.
  Eigen::MatrixXd G(n, m);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    b(i) = v[i];
    for (int j = 0; j < m; ++j) G(i, j) = cone.generators[j][i];
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(m, false);
  const int max_iter = 3 * m + 10;
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::VectorXd resid = b - G * w;
    Eigen::VectorXd grad = G.transpose() * resid;
    int best = -1;
    double best_g = 1e-12;
    for (int j = 0; j < m; ++j)
      if (!passive[j] && grad(j) > best_g) {
        best_g = grad(j);
        best = j;
      }
    if (best < 0) break;
    passive[best] = true;
    for (;;) {
      std::vector<int> idx;
      for (int j = 0; j < m; ++j)
        if (passive[j]) idx.push_back(j);
      Eigen::MatrixXd Gp(n, idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) Gp.col(k) = G.col(idx[k]);
      Eigen::VectorXd z =
          Gp.colPivHouseholderQr().solve(b);
      bool feasible = true;
      for (int k = 0; k < z.size(); ++k)
        if (z(k) <= 0.0) feasible = false;
      if (feasible) {
        w.setZero();
        for (std::size_t k = 0; k < idx.size(); ++k) w(idx[k]) = z(k);
        break;
      }
      // step back toward the last feasible point
      double alpha = 1.0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        double wj = w(idx[k]);
        if (z(k) <= 0.0 && wj - z(k) > 0.0)
          alpha = std::min(alpha, wj / (wj - z(k)));
      }
      for (std::size_t k = 0; k < idx.size(); ++k) {
        double nw = w(idx[k]) + alpha * (z(k) - w(idx[k]));
        w(idx[k]) = nw;
        if (nw <= 1e-14) {
          w(idx[k]) = 0.0;
          passive[idx[k]] = false;
        }
      }
    }
  }
  double resid = (b - G * w).norm();
  return resid <= 1e-9 * std::max(1.0, b.norm());
}

std::vector<Vec> cone_grid(const ConeSpec& cone, int per_ray) {
  if (per_ray < 2) throw IcError("cone_grid: per_ray must be >= 2");
  const int n = cone.dimension;
  const int m = static_cast<int>(cone.generators.size());
  std::vector<Vec> out;
  std::vector<int> digits(m, 0);
  for (;;) {
    Vec v = vzero();
    for (int j = 0; j < m; ++j) {
      double mag = cone.size_cap * digits[j] / (per_ray - 1);
      for (int i = 0; i < n; ++i) v[i] += mag * cone.generators[j][i];
    }
    out.push_back(v);
    int j = 0;
    while (j < m && ++digits[j] == per_ray) digits[j++] = 0;
    if (j == m) break;
  }
  return out;
}

ImpulseControl normalize_control(const std::vector<Impulse>& raw, double t,
                                 double T, const ConeSpec& cone) {
  ImpulseControl c;
  c.start_time = t;
  c.impulses = raw;
  std::stable_sort(c.impulses.begin(), c.impulses.end(),
                   [](const Impulse& a, const Impulse& b) {
                     return a.time < b.time;
                   });
  for (std::size_t j = 0; j < c.impulses.size(); ++j) {
    const auto& im = c.impulses[j];
    if (im.time < t || im.time > T)
      throw IcError("impulse time outside [t, T]");
    if (j > 0 && !(c.impulses[j - 1].time < im.time))
      throw IcError("simultaneous impulses");
    if (!cone_contains(cone, im.size)) throw IcError("cone violation");
  }
  return c;
}

AssumptionReport validate_problem(const ProblemSpec& spec, int sample_count,
                                  std::uint64_t seed) {
  if (sample_count < 100)
    throw IcError("validate_problem: sample_count must be >= 100");
  AssumptionReport rep;
  const int n = spec.dim_state;
  const double T = spec.horizon;
  RngStream rng(hash_combine(seed, 0x76616c69ULL));

  auto sample_x = [&](double range) {
    Vec x = vzero();
    for (int i = 0; i < n; ++i) x[i] = (2.0 * rng.uniform() - 1.0) * range;
    return x;
  };
  auto sample_xi = [&]() {
    // random nonnegative combination of generators, inside the cap
    Vec v = vzero();
    for (const auto& g : spec.cone.generators) {
      double w = rng.uniform() * spec.cone.size_cap /
                 std::max<std::size_t>(1, spec.cone.generators.size());
      for (int i = 0; i < n; ++i) v[i] += w * g[i];
    }
    return v;
  };

  rep.finite_ok = true;
  rep.nonneg_ok = true;
  rep.ell_lower_ok = true;
  rep.ell_monotone_ok = true;
  rep.subadditive_ok = true;
  rep.lipschitz_ok = true;
  rep.twice_diff_ok = true;
  rep.subadditivity_margin = std::numeric_limits<double>::infinity();
  const double tol = 1e-9;

  for (int k = 0; k < sample_count; ++k) {
    double tau = rng.uniform() * T;
    // finiteness probed over the wide range, costs over a moderate one
    Vec xw = sample_x(1e6);
    Vec xm = sample_x(10.0);
    for (const CoefficientFamily* f :
         {&spec.drift, &spec.diffusion}) {
      if (!vfinite(eval_vec(*f, n, tau, xw), n)) {
        rep.finite_ok = false;
        rep.failure_detail = "non-finite drift/diffusion evaluation";
      }
    }
    for (const CoefficientFamily* f :
         {&spec.running_cost, &spec.terminal_cost}) {
      double v = eval_scalar(*f, n, tau, xw);
      if (!std::isfinite(v)) {
        rep.finite_ok = false;
        rep.failure_detail = "non-finite cost evaluation";
      }
    }
    double g = eval_scalar(spec.running_cost, n, tau, xm);
    double h = eval_scalar(spec.terminal_cost, n, tau, xm);
    rep.sup_g = std::max(rep.sup_g, std::abs(g));
    rep.sup_h = std::max(rep.sup_h, std::abs(h));
    if (g < -tol || h < -tol) rep.nonneg_ok = false;

    Vec xi = sample_xi();
    Vec xi2 = sample_xi();
    double ell = impulse_cost(spec, tau, xi);
    if (ell < -tol) rep.nonneg_ok = false;
    double lb = spec.ell0 * (1.0 + std::pow(vnorm(xi, n), spec.mu));
    if (ell < lb - tol) rep.ell_lower_ok = false;

    double tau2 = tau + rng.uniform() * (T - tau);
    if (impulse_cost(spec, tau2, xi) > ell + tol) rep.ell_monotone_ok = false;

    double margin = impulse_cost(spec, tau, xi) + impulse_cost(spec, tau, xi2) -
                    impulse_cost(spec, tau, vadd(xi, xi2, n));
    rep.subadditivity_margin = std::min(rep.subadditivity_margin, margin);

    // difference-quotient probe for a Lipschitz estimate of b, sigma in x
    Vec xa = sample_x(10.0);
    Vec xb = sample_x(10.0);
    double dx = vnorm(vsub(xa, xb, n), n);
    if (dx > 1e-8) {
      for (const CoefficientFamily* f : {&spec.drift, &spec.diffusion}) {
        double df =
            vnorm(vsub(eval_vec(*f, n, tau, xa), eval_vec(*f, n, tau, xb), n),
                  n);
        double ratio = df / dx;
        if (!std::isfinite(ratio)) rep.lipschitz_ok = false;
        rep.lipschitz_K = std::max(rep.lipschitz_K, ratio);
      }
    }

    // closed-form second derivatives vs central finite differences
    const double fd = 1e-5;
    for (const CoefficientFamily* f : {&spec.drift, &spec.diffusion}) {
      Vec d2 = eval_vec_dxx(*f, n, tau, xm);
      for (int i = 0; i < n; ++i) {
        Vec xp = xm, xq = xm;
        xp[i] += fd;
        xq[i] -= fd;
        double approx = (eval_vec(*f, n, tau, xp)[i] -
                         2.0 * eval_vec(*f, n, tau, xm)[i] +
                         eval_vec(*f, n, tau, xq)[i]) /
                        (fd * fd);
        if (!std::isfinite(approx) ||
            std::abs(approx - d2[i]) >
                1e-4 * std::max(1.0, std::abs(d2[i])) + 1e-3)
          rep.twice_diff_ok = false;
      }
    }
  }

  if (!(rep.subadditivity_margin > 0.0)) rep.subadditive_ok = false;

  // tau modulus probes at fixed gaps
  for (double delta : {0.01, 0.05, 0.1, 0.2}) {
    double worst = 0.0;
    for (int k = 0; k < 64; ++k) {
      double tau = rng.uniform() * std::max(1e-12, T - delta);
      Vec x = sample_x(10.0);
      for (const CoefficientFamily* f : {&spec.drift, &spec.diffusion}) {
        double d = vnorm(vsub(eval_vec(*f, n, tau + delta, x),
                              eval_vec(*f, n, tau, x), n),
                         n);
        worst = std::max(worst, d);
      }
    }
    rep.tau_modulus_gaps.push_back(delta);
    rep.tau_modulus_values.push_back(worst);
  }
  return rep;
}

}  // namespace ic
