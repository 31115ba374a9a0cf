#include "impulse/qvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace ic {

double interp_clamped(const std::vector<double>& xs,
                      const std::vector<double>& vs, double x) {
  if (x <= xs.front()) return vs.front();
  if (x >= xs.back()) return vs.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t j = static_cast<std::size_t>(it - xs.begin());
  double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return (1.0 - w) * vs[j - 1] + w * vs[j];
}

std::vector<double> scalar_cone_lattice(const ConeSpec& cone, int per_ray) {
  std::vector<Vec> pts = cone_grid(cone, per_ray);
  std::set<double> uniq;
  for (const auto& p : pts) uniq.insert(p[0]);
  return std::vector<double>(uniq.begin(), uniq.end());
}

InterventionResult intervention_operator(const std::vector<double>& v_slice,
                                         const std::vector<double>& x_nodes,
                                         double t, const ProblemSpec& spec,
                                         const std::vector<double>& xi_lattice) {
  InterventionResult res;
  const std::size_t nx = x_nodes.size();
  res.values.resize(nx);
  res.argmin.resize(nx);
  std::vector<double> ell(xi_lattice.size());
  for (std::size_t q = 0; q < xi_lattice.size(); ++q) {
    Vec xi = vzero();
    xi[0] = xi_lattice[q];
    ell[q] = impulse_cost(spec, t, xi);
  }
  for (std::size_t i = 0; i < nx; ++i) {
    double best = std::numeric_limits<double>::infinity();
    double best_xi = 0.0;
    for (std::size_t q = 0; q < xi_lattice.size(); ++q) {
      double xi = xi_lattice[q];
      double cand = interp_clamped(x_nodes, v_slice, x_nodes[i] + xi) + ell[q];
      // ties toward the smallest |xi|, then the smaller value of xi
      if (cand < best - 1e-15 ||
          (cand <= best + 1e-15 && (std::abs(xi) < std::abs(best_xi) ||
                                    (std::abs(xi) == std::abs(best_xi) &&
                                     xi < best_xi)))) {
        best = cand;
        best_xi = xi;
      }
    }
    res.values[i] = best;
    res.argmin[i] = best_xi;
  }
  return res;
}

namespace {

struct SliceCoeffs {
  std::vector<double> b, sig2, g;
};

SliceCoeffs slice_coeffs(const ProblemSpec& spec, double tau,
                         const std::vector<double>& x_nodes) {
  SliceCoeffs c;
  const std::size_t nx = x_nodes.size();
  c.b.resize(nx);
  c.sig2.resize(nx);
  c.g.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    Vec x = vzero();
    x[0] = x_nodes[i];
    c.b[i] = eval_vec(spec.drift, 1, tau, x)[0];
    double s = eval_vec(spec.diffusion, 1, tau, x)[0];
    c.sig2[i] = s * s;
    c.g[i] = eval_scalar(spec.running_cost, 1, tau, x);
  }
  return c;
}

// One explicit backward substep of size dt for V_t + H = 0 (upwind first
// derivative, central second, mirror ghosts at both ends).
void explicit_step(std::vector<double>& v, const SliceCoeffs& c, double dx,
                   double dt) {
  const std::size_t nx = v.size();
  std::vector<double> out(nx);
  auto at = [&](std::ptrdiff_t i) -> double {
    if (i < 0) return v[1];
    if (i >= static_cast<std::ptrdiff_t>(nx)) return v[nx - 2];
    return v[i];
  };
  for (std::size_t i = 0; i < nx; ++i) {
    double vm = at(static_cast<std::ptrdiff_t>(i) - 1);
    double vp = at(static_cast<std::ptrdiff_t>(i) + 1);
    double dxx = (vp - 2.0 * v[i] + vm) / (dx * dx);
    double dxv = c.b[i] >= 0.0 ? (vp - v[i]) / dx : (v[i] - vm) / dx;
    out[i] = v[i] + dt * (c.b[i] * dxv + 0.5 * c.sig2[i] * dxx + c.g[i]);
  }
  v.swap(out);
}

}  // namespace

QviSolution solve_qvi(const ProblemSpec& spec, const SolveGrid& grid,
                      const SolverConfig& cfg, int threads) {
  if (spec.dim_state != 1) throw IcError("solve_qvi: n = 1 only");
  if (grid.t_count < 32 || grid.x_count < 32)
    throw IcError("solve_qvi: grid counts must be >= 32");

  const int nx = grid.x_count;
  const double dx = (grid.x_max - grid.x_min) / (nx - 1);
  std::vector<double> x_nodes(nx);
  for (int i = 0; i < nx; ++i) x_nodes[i] = grid.x_min + i * dx;
  std::vector<double> lattice = scalar_cone_lattice(spec.cone, cfg.per_ray);

  QviSolution sol;
  sol.value.grid = grid;
  sol.value.x_nodes = x_nodes;
  sol.policy.grid = grid;
  sol.policy.x_nodes = x_nodes;
  const std::size_t n_tau = grid.tau_values.size();
  sol.value.t_nodes.resize(n_tau);
  sol.value.values.resize(n_tau);
  sol.policy.t_nodes.resize(n_tau);
  sol.policy.intervene.resize(n_tau);
  sol.policy.impulse_size.resize(n_tau);

  for (double tau : grid.tau_values)
    if (tau > spec.horizon) throw IcError("solve_qvi: tau above horizon");

  std::vector<std::string> slice_errors(n_tau);
  parallel_for(n_tau, threads, [&](std::size_t s) {
   try {
    double tau = grid.tau_values[s];
    const double T = spec.horizon;
    const int nt = grid.t_count;
    std::vector<double> t_nodes(nt);
    for (int k = 0; k < nt; ++k)
      t_nodes[k] = tau + (T - tau) * k / (nt - 1);

    SliceCoeffs coef = slice_coeffs(spec, tau, x_nodes);
    double max_sig2 = 0.0, max_b = 0.0;
    for (int i = 0; i < nx; ++i) {
      max_sig2 = std::max(max_sig2, coef.sig2[i]);
      max_b = std::max(max_b, std::abs(coef.b[i]));
    }
    double dt_cfl =
        cfg.cfl_safety / (max_sig2 / (dx * dx) + max_b / dx + 1e-300);

    std::vector<std::vector<double>> V(nt, std::vector<double>(nx));
    std::vector<std::vector<char>> ivn(nt, std::vector<char>(nx, 0));
    std::vector<std::vector<double>> isz(nt, std::vector<double>(nx, 0.0));

    // terminal slice: min{h, N[h]}
    std::vector<double> h(nx);
    for (int i = 0; i < nx; ++i) {
      Vec x = vzero();
      x[0] = x_nodes[i];
      h[i] = eval_scalar(spec.terminal_cost, 1, spec.tau0, x);
    }
    InterventionResult nh =
        intervention_operator(h, x_nodes, T, spec, lattice);
    for (int i = 0; i < nx; ++i) {
      if (nh.values[i] < h[i]) {
        V[nt - 1][i] = nh.values[i];
        ivn[nt - 1][i] = nh.argmin[i] != 0.0;
        isz[nt - 1][i] = nh.argmin[i];
      } else {
        V[nt - 1][i] = h[i];
      }
    }

    for (int k = nt - 2; k >= 0; --k) {
      double span = t_nodes[k + 1] - t_nodes[k];
      int substeps = std::max(1, static_cast<int>(std::ceil(span / dt_cfl)));
      double dt = span / substeps;
      std::vector<double> W = V[k + 1];
      for (int m = 0; m < substeps; ++m) explicit_step(W, coef, dx, dt);

      InterventionResult nv;
      for (int it = 0; it < cfg.max_fixed_point; ++it) {
        nv = intervention_operator(W, x_nodes, t_nodes[k], spec, lattice);
        double change = 0.0;
        for (int i = 0; i < nx; ++i) {
          if (nv.values[i] < W[i]) {
            change = std::max(change, W[i] - nv.values[i]);
            W[i] = nv.values[i];
          }
        }
        if (change < cfg.tol) break;
        if (it + 1 == cfg.max_fixed_point)
          throw IcError("solve_qvi: obstacle fixed point did not converge at "
                        "slice " + std::to_string(s));
      }
      // final obstacle pass for the policy decision
      nv = intervention_operator(W, x_nodes, t_nodes[k], spec, lattice);
      for (int i = 0; i < nx; ++i) {
        if (nv.values[i] <= W[i] + cfg.tol && nv.argmin[i] != 0.0) {
          ivn[k][i] = 1;
          isz[k][i] = nv.argmin[i];
        }
      }
      V[k] = std::move(W);
    }

    sol.value.t_nodes[s] = t_nodes;
    sol.value.values[s] = std::move(V);
    sol.policy.t_nodes[s] = std::move(t_nodes);
    sol.policy.intervene[s] = std::move(ivn);
    sol.policy.impulse_size[s] = std::move(isz);
   } catch (const IcError& e) {
    slice_errors[s] = e.what();
   }
  });
  for (const auto& e : slice_errors)
    if (!e.empty()) throw IcError(e);
  return sol;
}

ResidualReport qvi_residual(const ValueFunction& v, const ProblemSpec& spec,
                            const SolverConfig& cfg) {
  ResidualReport rep;
  const auto& grid = v.grid;
  const int nx = grid.x_count;
  const double dx = (grid.x_max - grid.x_min) / (nx - 1);
  int margin_nodes =
      std::max(1, static_cast<int>(std::ceil(grid.boundary_margin / dx)));
  std::vector<double> lattice = scalar_cone_lattice(spec.cone, cfg.per_ray);
  std::vector<double> all;

  for (std::size_t s = 0; s < grid.tau_values.size(); ++s) {
    double tau = grid.tau_values[s];
    SliceCoeffs coef = slice_coeffs(spec, tau, v.x_nodes);
    const auto& tn = v.t_nodes[s];
    for (std::size_t k = 0; k + 1 < tn.size(); ++k) {
      double dt = tn[k + 1] - tn[k];
      const auto& vk = v.values[s][k];
      const auto& vk1 = v.values[s][k + 1];
      InterventionResult nv =
          intervention_operator(vk, v.x_nodes, tn[k], spec, lattice);
      for (int i = margin_nodes; i < nx - margin_nodes; ++i) {
        double dtv = (vk1[i] - vk[i]) / dt;
        double dxx = (vk1[i + 1] - 2.0 * vk1[i] + vk1[i - 1]) / (dx * dx);
        double dxv = coef.b[i] >= 0.0 ? (vk1[i + 1] - vk1[i]) / dx
                                      : (vk1[i] - vk1[i - 1]) / dx;
        double ham = coef.b[i] * dxv + 0.5 * coef.sig2[i] * dxx + coef.g[i];
        double r = std::min(dtv + ham, nv.values[i] - vk[i]);
        all.push_back(std::abs(r));
      }
    }
  }
  rep.node_count = all.size();
  if (!all.empty()) {
    std::sort(all.begin(), all.end());
    rep.max_abs = all.back();
    std::size_t q =
        std::min(all.size() - 1,
                 static_cast<std::size_t>(std::floor(0.99 * all.size())));
    rep.pct99 = all[q];
  }
  return rep;
}

namespace {

double interp_value(const ValueFunction& v, std::size_t tau_idx, double t,
                    double x) {
  const auto& tn = v.t_nodes[tau_idx];
  if (t <= tn.front())
    return interp_clamped(v.x_nodes, v.values[tau_idx].front(), x);
  if (t >= tn.back())
    return interp_clamped(v.x_nodes, v.values[tau_idx].back(), x);
  auto it = std::upper_bound(tn.begin(), tn.end(), t);
  std::size_t k = static_cast<std::size_t>(it - tn.begin());
  double w = (t - tn[k - 1]) / (tn[k] - tn[k - 1]);
  double lo = interp_clamped(v.x_nodes, v.values[tau_idx][k - 1], x);
  double hi = interp_clamped(v.x_nodes, v.values[tau_idx][k], x);
  return (1.0 - w) * lo + w * hi;
}

}  // namespace

DppReport check_dpp(const ProblemSpec& spec, const QviSolution& sol,
                    int sample_points, double delta, std::size_t paths,
                    std::uint64_t seed, int threads) {
  const ValueFunction& v = sol.value;
  DppReport rep;
  rep.all_ok = true;
  RngStream rng(hash_combine(seed, 0x64707021ULL));
  SolverConfig cfg;
  std::vector<double> lattice = scalar_cone_lattice(spec.cone, cfg.per_ray);

  ProblemSpec frozen = spec;
  frozen.semantics = Semantics::Frozen;

  const int nx = v.grid.x_count;
  double dx = (v.grid.x_max - v.grid.x_min) / (nx - 1);
  double dt_grid = spec.horizon / v.grid.t_count;

  // keep start points far enough from the boundary that free paths almost
  // never reach it over the look-ahead window (the scheme's mirror boundary
  // is not simulated)
  double sig_max = 0.0;
  for (int i = 0; i < nx; ++i) {
    Vec xs = vzero();
    xs[0] = v.x_nodes[i];
    sig_max = std::max(sig_max,
                       std::abs(eval_scalar(spec.diffusion, 1, 0.0, xs)));
  }
  int margin_nodes = std::max(
      4, static_cast<int>(std::ceil(4.0 * sig_max * std::sqrt(delta) / dx)) + 2);
  if (2 * margin_nodes + 8 > nx) margin_nodes = std::max(4, nx / 4);

  // the scheme is first order in time and second order in space, so the
  // comparison carries a truncation bias of that size on top of MC noise
  double disc_tol = dx * dx + dt_grid;

  for (int q = 0; q < sample_points; ++q) {
    std::size_t s = static_cast<std::size_t>(rng.uniform() *
                                             v.grid.tau_values.size());
    s = std::min(s, v.grid.tau_values.size() - 1);
    double tau = v.grid.tau_values[s];
    const auto& tn = v.t_nodes[s];

    // draw a strict-continuation grid point with t + delta <= T
    DppPoint pt;
    bool found = false;
    for (int attempt = 0; attempt < 200 && !found; ++attempt) {
      std::size_t k = static_cast<std::size_t>(rng.uniform() * (tn.size() - 1));
      if (tn[k] + delta > spec.horizon) continue;
      int i = margin_nodes +
              static_cast<int>(rng.uniform() * (nx - 2 * margin_nodes));
      i = std::min(i, nx - margin_nodes - 1);
      InterventionResult nv = intervention_operator(
          v.values[s][k], v.x_nodes, tn[k], spec, lattice);
      double gap = nv.values[i] - v.values[s][k][i];
      if (gap > 10.0 * cfg.tol + 1e-6) {
        pt.tau_idx = static_cast<int>(s);
        pt.t = tn[k];
        pt.x = v.x_nodes[i];
        pt.value = v.values[s][k][i];
        pt.continuation = true;
        found = true;
      }
    }
    if (!found) continue;

    // Monte Carlo continuation value over [t, t+delta], no impulses, frozen
    // coefficients at this slice's tau.
    ProblemSpec local = frozen;
    local.tau0 = tau;
    local.horizon = pt.t + delta;
    ImpulseControl none;
    none.start_time = pt.t;
    TimeGrid g = make_time_grid(pt.t, pt.t + delta, none, 64);
    std::vector<double> vals(paths);
    Vec x0 = vzero();
    x0[0] = pt.x;
    parallel_for(paths, threads, [&](std::size_t p) {
      BrownianGrid noise = make_brownian(g, hash_combine(seed, q), p);
      Trajectory traj = simulate_state(local, none, x0, g, noise);
      KahanSum run;
      for (std::size_t k = 0; k + 1 < g.nodes.size(); ++k) {
        double dt = g.nodes[k + 1] - g.nodes[k];
        run.add(eval_scalar(spec.running_cost, 1, tau, traj.post[k]) * dt);
      }
      vals[p] = run.value() +
                interp_value(v, s, pt.t + delta, traj.post.back()[0]);
    });
    MeanStderr ms = mean_stderr(vals);
    pt.mc_value = ms.mean;
    pt.stderr_ = ms.stderr_;
    double band = 3.0 * ms.stderr_ + disc_tol;
    pt.inequality_ok = pt.value <= pt.mc_value + band;
    pt.equality_ok = std::abs(pt.value - pt.mc_value) <= band;
    rep.all_ok = rep.all_ok && pt.inequality_ok && pt.equality_ok;
    rep.points.push_back(pt);
  }
  return rep;
}

RegularityReport check_regularity(const ValueFunction& v,
                                  const ProblemSpec& spec) {
  RegularityReport rep;
  rep.v_min = std::numeric_limits<double>::infinity();
  rep.v_max = -rep.v_min;
  double sup_g = 0.0, sup_h = 0.0;
  for (double xv : v.x_nodes) {
    Vec x = vzero();
    x[0] = xv;
    for (double tau : v.grid.tau_values)
      sup_g = std::max(sup_g,
                       std::abs(eval_scalar(spec.running_cost, 1, tau, x)));
    sup_h = std::max(sup_h,
                     std::abs(eval_scalar(spec.terminal_cost, 1, spec.tau0, x)));
  }
  rep.bound = spec.horizon * sup_g + sup_h;

  const double dx = v.x_nodes[1] - v.x_nodes[0];
  for (std::size_t s = 0; s < v.grid.tau_values.size(); ++s) {
    const auto& tn = v.t_nodes[s];
    for (std::size_t k = 0; k < tn.size(); ++k) {
      const auto& row = v.values[s][k];
      for (std::size_t i = 0; i < row.size(); ++i) {
        rep.v_min = std::min(rep.v_min, row[i]);
        rep.v_max = std::max(rep.v_max, row[i]);
        if (i + 1 < row.size())
          rep.x_lipschitz =
              std::max(rep.x_lipschitz, std::abs(row[i + 1] - row[i]) / dx);
        if (k + 1 < tn.size()) {
          double dt = tn[k + 1] - tn[k];
          rep.t_holder = std::max(
              rep.t_holder,
              std::abs(v.values[s][k + 1][i] - row[i]) / std::sqrt(dt));
        }
      }
    }
  }
  // tau variation at matched (t, x) probe points across adjacent slices
  for (std::size_t s = 0; s + 1 < v.grid.tau_values.size(); ++s) {
    double t_lo = std::max(v.t_nodes[s].front(), v.t_nodes[s + 1].front());
    for (int m = 0; m <= 8; ++m) {
      double t = t_lo + (v.t_nodes[s].back() - t_lo) * m / 8.0;
      for (std::size_t i = 0; i < v.x_nodes.size(); i += 8) {
        double a = interp_value(v, s, t, v.x_nodes[i]);
        double b = interp_value(v, s + 1, t, v.x_nodes[i]);
        rep.tau_variation = std::max(rep.tau_variation, std::abs(a - b));
      }
    }
  }
  rep.bounds_ok = rep.v_min >= -1e-9 && rep.v_max <= rep.bound + 1e-9;
  return rep;
}

SemiconvexityReport check_semiconvexity(const ValueFunction& v,
                                        double interp_slack) {
  SemiconvexityReport rep;
  const double dx = v.x_nodes[1] - v.x_nodes[0];
  const int nx = static_cast<int>(v.x_nodes.size());
  // (lambda, left stride multiplier, span multiplier): x_lam = x_i + a*s,
  // x_j = x_i + m*s with lambda = 1 - a/m.
  struct Case { double lambda; int a; int m; };
  const Case cases[] = {{0.5, 1, 2}, {0.25, 3, 4}, {0.75, 1, 4}};
  for (std::size_t sidx = 0; sidx < v.grid.tau_values.size(); ++sidx) {
    for (const auto& row : v.values[sidx]) {
      for (const auto& c : cases) {
        for (int s = 1; c.m * s < nx; s *= 2) {
          for (int i = 0; i + c.m * s < nx; ++i) {
            double xl = v.x_nodes[i];
            double xr = v.x_nodes[i + c.m * s];
            double mid = row[i + c.a * s];
            double chord = c.lambda * row[i] + (1.0 - c.lambda) * row[i + c.m * s];
            double span2 = (xr - xl) * (xr - xl);
            double num = mid - chord - interp_slack;
            if (num > 0.0)
              rep.K_sc = std::max(
                  rep.K_sc, num / (c.lambda * (1.0 - c.lambda) * span2));
          }
        }
      }
    }
  }
  (void)dx;
  return rep;
}

DoubleImpulseReport check_no_double_impulse(const QviSolution& sol,
                                            const ProblemSpec& spec,
                                            const SolverConfig& cfg) {
  DoubleImpulseReport rep;
  rep.ok = true;
  const ValueFunction& v = sol.value;
  std::vector<double> lattice = scalar_cone_lattice(spec.cone, cfg.per_ray);
  for (std::size_t s = 0; s < v.grid.tau_values.size(); ++s) {
    const auto& tn = v.t_nodes[s];
    for (std::size_t k = 0; k < tn.size(); ++k) {
      InterventionResult nv = intervention_operator(
          v.values[s][k], v.x_nodes, tn[k], spec, lattice);
      for (std::size_t i = 0; i < v.x_nodes.size(); ++i) {
        if (!sol.policy.intervene[s][k][i]) continue;
        ++rep.intervention_nodes;
        double landing = v.x_nodes[i] + sol.policy.impulse_size[s][k][i];
        if (landing > v.x_nodes.back() || landing < v.x_nodes.front())
          continue;  // clamped landing excluded, like the residual band
        double v_land = interp_clamped(v.x_nodes, v.values[s][k], landing);
        double n_land = interp_clamped(v.x_nodes, nv.values, landing);
        if (!(n_land - v_land > cfg.tol)) {
          rep.ok = false;
          rep.violations.push_back({static_cast<int>(s), static_cast<int>(k),
                                    static_cast<int>(i)});
        }
      }
    }
  }
  return rep;
}

GridPolicy::GridPolicy(const PolicyMap& map, int tau_idx)
    : map_(map), tau_idx_(tau_idx) {}

bool GridPolicy::intervene(double t, const Vec& x, Vec* xi) const {
  const auto& tn = map_.t_nodes[tau_idx_];
  auto it = std::lower_bound(tn.begin(), tn.end(), t - 1e-12);
  std::size_t k = std::min<std::size_t>(
      static_cast<std::size_t>(it - tn.begin()), tn.size() - 1);
  if (k > 0 && std::abs(tn[k - 1] - t) < std::abs(tn[k] - t)) --k;
  const auto& xs = map_.x_nodes;
  double clamped = std::clamp(x[0], xs.front(), xs.back());
  std::size_t i = static_cast<std::size_t>(
      std::round((clamped - xs.front()) / (xs[1] - xs[0])));
  i = std::min(i, xs.size() - 1);
  if (!map_.intervene[tau_idx_][k][i]) return false;
  *xi = vzero();
  (*xi)[0] = map_.impulse_size[tau_idx_][k][i];
  return true;
}

}  // namespace ic
