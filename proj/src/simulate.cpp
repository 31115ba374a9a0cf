#include "impulse/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ic {

namespace {
constexpr double kNodeTol = 1e-12;
constexpr double kBlowup = 1e10;
}  // namespace

TimeGrid make_time_grid_extra(double t, double T, const ImpulseControl& control,
                              int base_steps,
                              const std::vector<double>& extra_nodes) {
  if (base_steps < 16) throw IcError("make_time_grid: base_steps must be >= 16");
  if (!(t < T)) throw IcError("make_time_grid: need t < T");
  std::vector<double> nodes;
  nodes.reserve(base_steps + 1 + control.impulses.size() + extra_nodes.size());
  for (int k = 0; k <= base_steps; ++k)
    nodes.push_back(t + (T - t) * k / base_steps);
  for (const auto& im : control.impulses) {
    if (im.time < t - kNodeTol || im.time > T + kNodeTol)
      throw IcError("impulse time outside [t, T]");
    nodes.push_back(im.time);
  }
  for (double e : extra_nodes) {
    if (e >= t - kNodeTol && e <= T + kNodeTol)
      nodes.push_back(std::clamp(e, t, T));
  }
  std::sort(nodes.begin(), nodes.end());
  std::vector<double> dedup;
  for (double v : nodes)
    if (dedup.empty() || v - dedup.back() > kNodeTol) dedup.push_back(v);
  dedup.front() = t;
  dedup.back() = T;

  TimeGrid g;
  g.start = t;
  g.end = T;
  g.base_steps = base_steps;
  g.nodes = std::move(dedup);
  for (const auto& im : control.impulses) {
    auto it = std::lower_bound(g.nodes.begin(), g.nodes.end(),
                               im.time - kNodeTol);
    g.impulse_nodes.push_back(static_cast<int>(it - g.nodes.begin()));
  }
  return g;
}

TimeGrid make_time_grid(double t, double T, const ImpulseControl& control,
                        int base_steps) {
  return make_time_grid_extra(t, T, control, base_steps, {});
}

BrownianGrid make_brownian(const TimeGrid& grid, std::uint64_t seed,
                           std::uint64_t path_id) {
  BrownianGrid b;
  b.seed = seed;
  b.path_id = path_id;
  RngStream rng(hash_combine(seed, path_id));
  b.increments.resize(grid.nodes.size() - 1);
  for (std::size_t k = 0; k + 1 < grid.nodes.size(); ++k) {
    double dt = grid.nodes[k + 1] - grid.nodes[k];
    b.increments[k] = std::sqrt(dt) * rng.gaussian();
  }
  return b;
}

Trajectory simulate_state(const ProblemSpec& spec,
                          const ImpulseControl& control, const Vec& x0,
                          const TimeGrid& grid, const BrownianGrid& noise) {
  if (noise.increments.size() + 1 != grid.nodes.size())
    throw IcError("simulate_state: noise does not match grid");
  const int n = spec.dim_state;
  const std::size_t N = grid.nodes.size();
  Trajectory traj;
  traj.pre.resize(N);
  traj.post.resize(N);
  traj.active_count.resize(N);

  // impulse node -> impulse index
  std::vector<int> jump_at(N, -1);
  for (std::size_t j = 0; j < grid.impulse_nodes.size(); ++j)
    jump_at[grid.impulse_nodes[j]] = static_cast<int>(j);

  Vec x = x0;
  int active = 0;
  for (std::size_t k = 0; k < N; ++k) {
    traj.pre[k] = x;
    if (jump_at[k] >= 0) {
      x = vadd(x, control.impulses[jump_at[k]].size, n);
      ++active;
    }
    traj.post[k] = x;
    traj.active_count[k] = active;
    if (!vfinite(x, n) || vnorm(x, n) > kBlowup)
      throw IcError("divergence at node " + std::to_string(k));
    if (k + 1 == N) break;

    double t = grid.nodes[k];
    double dt = grid.nodes[k + 1] - grid.nodes[k];
    double dW = noise.increments[k];
    Vec drift = eval_vec(spec.drift, n, spec.tau0, x);
    Vec diff = eval_vec(spec.diffusion, n, spec.tau0, x);
    if (spec.semantics == Semantics::Stacking) {
      for (int j = 0; j < active; ++j) {
        double tauj = control.impulses[j].time;
        drift = vadd(drift, eval_vec(spec.drift, n, tauj, x), n);
        diff = vadd(diff, eval_vec(spec.diffusion, n, tauj, x), n);
      }
    }
    (void)t;
    x = vadd(x, vadd(vscale(drift, dt, n), vscale(diff, dW, n), n), n);
  }
  return traj;
}

CostParts path_cost(const ProblemSpec& spec, const ImpulseControl& control,
                    const TimeGrid& grid, const Trajectory& traj) {
  const int n = spec.dim_state;
  CostParts parts;
  KahanSum running;
  for (std::size_t k = 0; k + 1 < grid.nodes.size(); ++k) {
    double t = grid.nodes[k];
    double dt = grid.nodes[k + 1] - grid.nodes[k];
    const Vec& x = traj.post[k];
    double g = eval_scalar(spec.running_cost, n, spec.tau0, x);
    if (spec.semantics == Semantics::Stacking) {
      for (int j = 0; j < traj.active_count[k]; ++j)
        g += eval_scalar(spec.running_cost, n, control.impulses[j].time, x);
    }
    (void)t;
    running.add(g * dt);
  }
  parts.running = running.value();
  for (const auto& im : control.impulses)
    parts.impulse += impulse_cost(spec, im.time, im.size);
  parts.terminal =
      eval_scalar(spec.terminal_cost, n, spec.tau0, traj.post.back());
  return parts;
}

CostEstimate estimate_cost(const ProblemSpec& spec,
                           const ImpulseControl& control, const Vec& x0,
                           std::size_t paths, int base_steps,
                           std::uint64_t seed, int threads) {
  if (paths < 100) throw IcError("estimate_cost: paths must be >= 100");
  TimeGrid grid = make_time_grid(control.start_time, spec.horizon, control,
                                 base_steps);
  std::vector<double> totals(paths), runs(paths), imps(paths), terms(paths);
  std::vector<char> failed(paths, 0);
  parallel_for(paths, threads, [&](std::size_t p) {
    try {
      BrownianGrid noise = make_brownian(grid, seed, p);
      Trajectory traj = simulate_state(spec, control, x0, grid, noise);
      CostParts parts = path_cost(spec, control, grid, traj);
      totals[p] = parts.total();
      runs[p] = parts.running;
      imps[p] = parts.impulse;
      terms[p] = parts.terminal;
    } catch (const IcError&) {
      failed[p] = 1;
    }
  });
  for (std::size_t p = 0; p < paths; ++p)
    if (failed[p]) throw IcError("divergence on path " + std::to_string(p));

  MeanStderr ms = mean_stderr(totals);
  CostEstimate est;
  est.mean = ms.mean;
  est.stderr_ = ms.stderr_;
  est.path_count = paths;
  est.running = mean_stderr(runs).mean;
  est.impulse = mean_stderr(imps).mean;
  est.terminal = mean_stderr(terms).mean;
  return est;
}

PolicyEvaluation evaluate_policy(const ProblemSpec& spec,
                                 const FeedbackPolicy& policy, const Vec& x0,
                                 std::size_t paths, int base_steps,
                                 std::uint64_t seed, std::size_t impulse_cap,
                                 int threads) {
  if (paths < 100) throw IcError("evaluate_policy: paths must be >= 100");
  const int n = spec.dim_state;
  ImpulseControl empty;
  empty.start_time = spec.tau0;
  TimeGrid grid = make_time_grid(spec.tau0, spec.horizon, empty, base_steps);
  const std::size_t N = grid.nodes.size();

  struct PathOut {
    double total = 0, running = 0, impulse = 0, terminal = 0;
    std::vector<double> times, sizes;
    bool cap = false;
    bool diverged = false;
  };
  std::vector<PathOut> outs(paths);

  parallel_for(paths, threads, [&](std::size_t p) {
    PathOut& o = outs[p];
    RngStream rng(hash_combine(seed, p));
    Vec x = x0;
    std::vector<std::pair<double, Vec>> applied;  // realized impulses
    KahanSum running;
    for (std::size_t k = 0; k < N; ++k) {
      double t = grid.nodes[k];
      if (applied.size() < impulse_cap) {
        Vec xi;
        if (policy.intervene(t, x, &xi) && vnorm(xi, n) > 0.0) {
          x = vadd(x, xi, n);
          applied.emplace_back(t, xi);
          o.impulse += impulse_cost(spec, t, xi);
          o.times.push_back(t);
          o.sizes.push_back(vnorm(xi, n));
        }
      } else {
        o.cap = true;
      }
      if (!vfinite(x, n) || vnorm(x, n) > kBlowup) {
        o.diverged = true;
        return;
      }
      if (k + 1 == N) break;
      double dt = grid.nodes[k + 1] - grid.nodes[k];
      double g = eval_scalar(spec.running_cost, n, spec.tau0, x);
      if (spec.semantics == Semantics::Stacking) {
        for (const auto& [tj, s] : applied)
          g += eval_scalar(spec.running_cost, n, tj, x);
      }
      running.add(g * dt);
      double dW = std::sqrt(dt) * rng.gaussian();
      Vec drift = eval_vec(spec.drift, n, spec.tau0, x);
      Vec diff = eval_vec(spec.diffusion, n, spec.tau0, x);
      if (spec.semantics == Semantics::Stacking) {
        for (const auto& [tj, s] : applied) {
          drift = vadd(drift, eval_vec(spec.drift, n, tj, x), n);
          diff = vadd(diff, eval_vec(spec.diffusion, n, tj, x), n);
        }
      }
      x = vadd(x, vadd(vscale(drift, dt, n), vscale(diff, dW, n), n), n);
    }
    o.running = running.value();
    o.terminal = eval_scalar(spec.terminal_cost, n, spec.tau0, x);
    o.total = o.running + o.impulse + o.terminal;
  });

  PolicyEvaluation ev;
  std::vector<double> totals, runs, imps, terms;
  totals.reserve(paths);
  for (const auto& o : outs) {
    if (o.diverged) throw IcError("divergence");
    totals.push_back(o.total);
    runs.push_back(o.running);
    imps.push_back(o.impulse);
    terms.push_back(o.terminal);
    std::size_t kappa = o.times.size();
    if (ev.kappa_histogram.size() <= kappa) ev.kappa_histogram.resize(kappa + 1);
    ev.kappa_histogram[kappa]++;
    ev.cap_reached = ev.cap_reached || o.cap;
    ev.impulse_times.insert(ev.impulse_times.end(), o.times.begin(),
                            o.times.end());
    ev.impulse_sizes.insert(ev.impulse_sizes.end(), o.sizes.begin(),
                            o.sizes.end());
  }
  MeanStderr ms = mean_stderr(totals);
  ev.cost.mean = ms.mean;
  ev.cost.stderr_ = ms.stderr_;
  ev.cost.path_count = paths;
  ev.cost.running = mean_stderr(runs).mean;
  ev.cost.impulse = mean_stderr(imps).mean;
  ev.cost.terminal = mean_stderr(terms).mean;
  return ev;
}

ContinuityProbe continuity_probe(const ProblemSpec& spec,
                                 const ImpulseControl& control, const Vec& x0,
                                 const Vec& x0p, double tau0, double tau0p,
                                 std::size_t paths, int base_steps,
                                 std::uint64_t seed, int threads) {
  const int n = spec.dim_state;
  ProblemSpec a = spec, b = spec;
  a.tau0 = tau0;
  b.tau0 = tau0p;
  TimeGrid grid = make_time_grid(control.start_time, spec.horizon, control,
                                 base_steps);
  std::vector<double> m2(paths), m4(paths);
  parallel_for(paths, threads, [&](std::size_t p) {
    BrownianGrid noise = make_brownian(grid, seed, p);
    Trajectory ta = simulate_state(a, control, x0, grid, noise);
    Trajectory tb = simulate_state(b, control, x0p, grid, noise);
    double sup = 0.0;
    for (std::size_t k = 0; k < grid.nodes.size(); ++k)
      sup = std::max(sup, vnorm(vsub(ta.post[k], tb.post[k], n), n));
    m2[p] = sup * sup;
    m4[p] = sup * sup * sup * sup;
  });
  ContinuityProbe probe;
  probe.sup_moment_p2 = mean_stderr(m2).mean;
  probe.sup_moment_p4 = mean_stderr(m4).mean;
  return probe;
}

}  // namespace ic
