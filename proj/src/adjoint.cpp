#include "impulse/adjoint.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace ic {

PathBundle make_bundle(const ProblemSpec& spec, const ImpulseControl& control,
                       double x0, std::size_t paths, int base_steps,
                       std::uint64_t seed, int threads,
                       const std::vector<double>& extra_nodes) {
  if (spec.dim_state != 1) throw IcError("make_bundle: n = 1 only");
  PathBundle b;
  b.control = control;
  b.x0 = x0;
  b.seed = seed;
  b.grid = make_time_grid_extra(control.start_time, spec.horizon, control,
                                base_steps, extra_nodes);
  const std::size_t N = b.grid.nodes.size();
  b.X.assign(paths, std::vector<double>(N));
  b.dW.assign(paths, std::vector<double>(N - 1));
  Vec x0v = vzero();
  x0v[0] = x0;
  std::vector<char> failed(paths, 0);
  parallel_for(paths, threads, [&](std::size_t p) {
    try {
      BrownianGrid noise = make_brownian(b.grid, seed, p);
      Trajectory traj = simulate_state(spec, control, x0v, b.grid, noise);
      for (std::size_t k = 0; k < N; ++k) b.X[p][k] = traj.post[k][0];
      b.dW[p] = noise.increments;
      if (p == 0) b.active_count = traj.active_count;
    } catch (const IcError&) {
      failed[p] = 1;
    }
  });
  for (std::size_t p = 0; p < paths; ++p)
    if (failed[p]) throw IcError("divergence on bundle path " +
                                 std::to_string(p));
  if (b.active_count.empty()) {
    BrownianGrid noise = make_brownian(b.grid, seed, 0);
    Trajectory traj = simulate_state(spec, control, x0v, b.grid, noise);
    b.active_count = traj.active_count;
  }
  return b;
}

namespace {

// Sum f(tau_j, x) over the active component set at a node: always tau0,
// plus each impulse's tau when stacking.
template <class F>
double active_sum(const FrozenCoefficients& fc, int node, F&& f) {
  double acc = f(fc.spec->tau0);
  if (fc.stacking) {
    int na = fc.bundle->active_count[node];
    for (int j = 0; j < na; ++j) acc += f(fc.bundle->control.impulses[j].time);
  }
  return acc;
}

}  // namespace

double FrozenCoefficients::Bx(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_vec_dx(spec->drift, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::Sx(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_vec_dx(spec->diffusion, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::Bxx_half(int node, double x) const {
  return 0.5 * bxx_sum(node, x);
}

double FrozenCoefficients::Sxx_half(int node, double x) const {
  return 0.5 * sxx_sum(node, x);
}

double FrozenCoefficients::Gx(int node, double x) const {
  return gx_sum(node, x);
}

double FrozenCoefficients::Gxx_half(int node, double x) const {
  return 0.5 * gxx_sum(node, x);
}

double FrozenCoefficients::Hx(double xT) const {
  Vec xv = vzero();
  xv[0] = xT;
  return eval_scalar_dx(spec->terminal_cost, 1, spec->tau0, xv)[0];
}

double FrozenCoefficients::Hxx_half(double xT) const {
  Vec xv = vzero();
  xv[0] = xT;
  return 0.5 * eval_scalar_dxx(spec->terminal_cost, 1, spec->tau0, xv)[0];
}

double FrozenCoefficients::bxx_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_vec_dxx(spec->drift, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::sxx_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_vec_dxx(spec->diffusion, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::gxx_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_scalar_dxx(spec->running_cost, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::gx_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_scalar_dx(spec->running_cost, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::b_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_vec(spec->drift, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::s_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_vec(spec->diffusion, 1, tau, xv)[0];
  });
}

double FrozenCoefficients::g_sum(int node, double x) const {
  Vec xv = vzero();
  xv[0] = x;
  return active_sum(*this, node, [&](double tau) {
    return eval_scalar(spec->running_cost, 1, tau, xv);
  });
}

double FrozenCoefficients::b_tau(int impulse, int node, double x) const {
  if (node < bundle->grid.impulse_nodes[impulse]) return 0.0;
  Vec xv = vzero();
  xv[0] = x;
  return eval_vec_dtau(spec->drift, 1, bundle->control.impulses[impulse].time,
                       xv)[0];
}

double FrozenCoefficients::sig_tau(int impulse, int node, double x) const {
  if (node < bundle->grid.impulse_nodes[impulse]) return 0.0;
  Vec xv = vzero();
  xv[0] = x;
  return eval_vec_dtau(spec->diffusion, 1,
                       bundle->control.impulses[impulse].time, xv)[0];
}

double FrozenCoefficients::g_tau(int impulse, int node, double x) const {
  if (node < bundle->grid.impulse_nodes[impulse]) return 0.0;
  Vec xv = vzero();
  xv[0] = x;
  return eval_scalar_dtau(spec->running_cost, 1,
                          bundle->control.impulses[impulse].time, xv);
}

std::vector<std::vector<std::vector<double>>> compute_zeta(
    const FrozenCoefficients& fc) {
  const auto& b = *fc.bundle;
  const std::size_t paths = b.X.size();
  const std::size_t N = b.grid.nodes.size();
  const std::size_t kappa = b.control.impulses.size();
  std::vector<std::vector<std::vector<double>>> zeta(
      kappa, std::vector<std::vector<double>>(paths, std::vector<double>(N, 0.0)));
  for (std::size_t i = 0; i < kappa; ++i) {
    for (std::size_t p = 0; p < paths; ++p) {
      double z = 0.0;
      for (std::size_t k = 0; k + 1 < N; ++k) {
        zeta[i][p][k] = z;
        double dt = b.grid.nodes[k + 1] - b.grid.nodes[k];
        z += fc.b_tau(static_cast<int>(i), static_cast<int>(k), b.X[p][k]) * dt +
             fc.sig_tau(static_cast<int>(i), static_cast<int>(k), b.X[p][k]) *
                 b.dW[p][k];
      }
      zeta[i][p][N - 1] = z;
    }
  }
  return zeta;
}

FrozenCoefficients compute_frozen(const ProblemSpec& spec,
                                  const PathBundle& bundle, bool stacking) {
  FrozenCoefficients fc;
  fc.spec = &spec;
  fc.bundle = &bundle;
  fc.stacking = stacking;

  // finite-difference cross-check of the closed-form derivatives
  fc.fd_check_ok = true;
  const double fd = 1e-5;
  RngStream rng(hash_combine(bundle.seed, 0x66647633ULL));
  for (int k = 0; k < 32; ++k) {
    double tau = rng.uniform() * spec.horizon;
    Vec x = vzero();
    x[0] = (2.0 * rng.uniform() - 1.0) * 3.0;
    Vec xp = x, xm = x;
    xp[0] += fd;
    xm[0] -= fd;
    struct Probe {
      double closed, approx, scale;
    };
    std::vector<Probe> probes;
    for (const CoefficientFamily* f : {&spec.drift, &spec.diffusion}) {
      probes.push_back({eval_vec_dx(*f, 1, tau, x)[0],
                        (eval_vec(*f, 1, tau, xp)[0] -
                         eval_vec(*f, 1, tau, xm)[0]) /
                            (2 * fd),
                        1.0});
    }
    probes.push_back({eval_scalar_dx(spec.running_cost, 1, tau, x)[0],
                      (eval_scalar(spec.running_cost, 1, tau, xp) -
                       eval_scalar(spec.running_cost, 1, tau, xm)) /
                          (2 * fd),
                      1.0});
    probes.push_back({eval_scalar_dtau(spec.running_cost, 1, tau, x),
                      (eval_scalar(spec.running_cost, 1, tau + fd, x) -
                       eval_scalar(spec.running_cost, 1, tau - fd, x)) /
                          (2 * fd),
                      1.0});
    for (const auto& pr : probes) {
      if (std::abs(pr.closed - pr.approx) >
          1e-4 * std::max(pr.scale, std::abs(pr.closed)) + 1e-6)
        fc.fd_check_ok = false;
    }
  }
  if (!fc.fd_check_ok)
    throw IcError("derivative inconsistency in coefficient registry");

  fc.zeta = compute_zeta(fc);
  for (const auto& im : bundle.control.impulses) {
    fc.ell_tau.push_back(impulse_cost_dtau(spec, im.time, im.size));
    fc.ell_xi.push_back(impulse_cost_dxi(spec, im.time, im.size)[0]);
  }
  return fc;
}

namespace {

struct Fit {
  std::vector<double> coeff;  // on the normalized basis
  double x_mean = 0.0, x_scale = 1.0;
  int degree = 0;
  bool reduced = false;
};

Fit regress(const std::vector<double>& xs, const std::vector<double>& ys,
            int degree, std::vector<double>* fitted) {
  const std::size_t P = xs.size();
  Fit fit;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= P;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  double scale = std::sqrt(var / std::max<std::size_t>(1, P - 1));
  if (scale < 1e-12) scale = 1.0;  // deterministic bundle: intercept only
  fit.x_mean = mean;
  fit.x_scale = scale;

  int deg = degree;
  for (;;) {
    int cols = deg + 1;
    Eigen::MatrixXd A(P, cols);
    for (std::size_t p = 0; p < P; ++p) {
      double z = (xs[p] - mean) / scale;
      double pw = 1.0;
      for (int c = 0; c < cols; ++c) {
        A(p, c) = pw;
        pw *= z;
      }
    }
    Eigen::VectorXd y(P);
    for (std::size_t p = 0; p < P; ++p) y(p) = ys[p];
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    // condition estimate from the R diagonal
    Eigen::VectorXd rd = qr.matrixR().diagonal().cwiseAbs();
    double cond = rd.maxCoeff() / std::max(rd.minCoeff(), 1e-300);
    if (cond > 1e12 && deg > 0) {
      --deg;
      fit.reduced = true;
      continue;
    }
    Eigen::VectorXd c = qr.solve(y);
    fit.degree = deg;
    fit.coeff.assign(c.data(), c.data() + c.size());
    if (fitted) {
      Eigen::VectorXd f = A * c;
      fitted->assign(f.data(), f.data() + f.size());
    }
    return fit;
  }
}

}  // namespace

FirstAdjoint solve_first_adjoint(const FrozenCoefficients& fc,
                                 int basis_degree, int threads) {
  const auto& b = *fc.bundle;
  const std::size_t P = b.X.size();
  const std::size_t N = b.grid.nodes.size();
  if (P < 1000) throw IcError("solve_first_adjoint: need >= 1000 paths");
  FirstAdjoint adj;
  adj.degree = basis_degree;
  adj.Y.assign(P, std::vector<double>(N, 0.0));
  adj.Z.assign(P, std::vector<double>(N, 0.0));
  adj.y_coeff.resize(N);
  adj.z_coeff.resize(N);

  std::vector<double> xk(P), yk1(P), target(P);
  for (std::size_t p = 0; p < P; ++p) adj.Y[p][N - 1] = fc.Hx(b.X[p][N - 1]);

  for (std::size_t k = N - 1; k-- > 0;) {
    double dt = b.grid.nodes[k + 1] - b.grid.nodes[k];
    for (std::size_t p = 0; p < P; ++p) {
      xk[p] = b.X[p][k];
      yk1[p] = adj.Y[p][k + 1];
    }
    // Z from the increment regression
    for (std::size_t p = 0; p < P; ++p) target[p] = yk1[p] * b.dW[p][k] / dt;
    std::vector<double> z_fit;
    Fit zf = regress(xk, target, basis_degree, &z_fit);
    adj.z_coeff[k] = zf.coeff;
    adj.degree_reduced = adj.degree_reduced || zf.reduced;

    // conditional expectation of Y(t_{k+1})
    std::vector<double> ce;
    Fit yf = regress(xk, yk1, basis_degree, &ce);
    adj.degree_reduced = adj.degree_reduced || yf.reduced;

    parallel_for(P, threads, [&](std::size_t p) {
      double bx = fc.Bx(static_cast<int>(k), xk[p]);
      double sx = fc.Sx(static_cast<int>(k), xk[p]);
      double gx = fc.Gx(static_cast<int>(k), xk[p]);
      double z = z_fit[p];
      double y = ce[p];
      for (int it = 0; it < 10; ++it) {
        double yn = ce[p] + dt * (bx * y + sx * z + gx);
        if (std::abs(yn - y) < 1e-10) {
          y = yn;
          break;
        }
        y = yn;
      }
      adj.Y[p][k] = y;
      adj.Z[p][k] = z;
    });
    // diagnostic refit of the final Y on the basis
    std::vector<double> ycur(P);
    for (std::size_t p = 0; p < P; ++p) ycur[p] = adj.Y[p][k];
    adj.y_coeff[k] = regress(xk, ycur, basis_degree, nullptr).coeff;
  }
  for (std::size_t p = 0; p < P; ++p) adj.Z[p][N - 1] = adj.Z[p][N - 2];
  return adj;
}

SecondAdjoint solve_second_adjoint(const FrozenCoefficients& fc,
                                   const FirstAdjoint& first, int basis_degree,
                                   int threads) {
  const auto& b = *fc.bundle;
  const std::size_t P = b.X.size();
  const std::size_t N = b.grid.nodes.size();
  SecondAdjoint adj;
  adj.degree = basis_degree;
  adj.P.assign(P, std::vector<double>(N, 0.0));
  adj.Q.assign(P, std::vector<double>(N, 0.0));
  adj.p_coeff.resize(N);
  adj.q_coeff.resize(N);

  std::vector<double> xk(P), pk1(P), target(P);
  for (std::size_t p = 0; p < P; ++p)
    adj.P[p][N - 1] = fc.Hxx_half(b.X[p][N - 1]);

  for (std::size_t k = N - 1; k-- > 0;) {
    double dt = b.grid.nodes[k + 1] - b.grid.nodes[k];
    for (std::size_t p = 0; p < P; ++p) {
      xk[p] = b.X[p][k];
      pk1[p] = adj.P[p][k + 1];
    }
    for (std::size_t p = 0; p < P; ++p) target[p] = pk1[p] * b.dW[p][k] / dt;
    std::vector<double> q_fit;
    Fit qf = regress(xk, target, basis_degree, &q_fit);
    adj.q_coeff[k] = qf.coeff;
    adj.degree_reduced = adj.degree_reduced || qf.reduced;

    std::vector<double> ce;
    Fit pf = regress(xk, pk1, basis_degree, &ce);
    adj.degree_reduced = adj.degree_reduced || pf.reduced;

    parallel_for(P, threads, [&](std::size_t p) {
      double bx = fc.Bx(static_cast<int>(k), xk[p]);
      double sx = fc.Sx(static_cast<int>(k), xk[p]);
      double y = first.Y[p][k];
      double z = first.Z[p][k];
      // half convention throughout: the terminal condition carries 1/2, so
      // the running Hessian must too, or the two scale differently whenever
      // the coefficients have curvature
      double hxx = 0.5 * (y * fc.bxx_sum(static_cast<int>(k), xk[p]) +
                          z * fc.sxx_sum(static_cast<int>(k), xk[p]) +
                          fc.gxx_sum(static_cast<int>(k), xk[p]));
      double q = q_fit[p];
      double pv = ce[p];
      for (int it = 0; it < 10; ++it) {
        double pn = ce[p] + dt * (2.0 * bx * pv + sx * sx * pv +
                                  2.0 * q * sx + hxx);
        if (std::abs(pn - pv) < 1e-10) {
          pv = pn;
          break;
        }
        pv = pn;
      }
      adj.P[p][k] = pv;
      adj.Q[p][k] = q;
    });
    std::vector<double> pcur(P);
    for (std::size_t p = 0; p < P; ++p) pcur[p] = adj.P[p][k];
    adj.p_coeff[k] = regress(xk, pcur, basis_degree, nullptr).coeff;
  }
  for (std::size_t p = 0; p < P; ++p) adj.Q[p][N - 1] = adj.Q[p][N - 2];
  return adj;
}

HamiltonianPath hamiltonian_bundle(const FrozenCoefficients& fc,
                                   const FirstAdjoint& first, int threads) {
  const auto& b = *fc.bundle;
  const std::size_t P = b.X.size();
  const std::size_t N = b.grid.nodes.size();
  HamiltonianPath hp;
  hp.H.assign(P, std::vector<double>(N));
  hp.Hx.assign(P, std::vector<double>(N));
  hp.Hxx.assign(P, std::vector<double>(N));
  parallel_for(P, threads, [&](std::size_t p) {
    for (std::size_t k = 0; k < N; ++k) {
      double x = b.X[p][k];
      double y = first.Y[p][k];
      double z = first.Z[p][k];
      int node = static_cast<int>(k);
      hp.H[p][k] = y * fc.b_sum(node, x) + z * fc.s_sum(node, x) +
                   fc.g_sum(node, x);
      Vec xv = vzero();
      xv[0] = x;
      double bx = fc.Bx(node, x);
      double sx = fc.Sx(node, x);
      double gx = fc.gx_sum(node, x);
      hp.Hx[p][k] = y * bx + z * sx + gx;
      hp.Hxx[p][k] = y * fc.bxx_sum(node, x) + z * fc.sxx_sum(node, x) +
                     fc.gxx_sum(node, x);
    }
  });
  return hp;
}

}  // namespace ic
