#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "impulse/presets.hpp"
#include "impulse/qvi.hpp"

using namespace ic;

namespace {

Vec v1(double a) {
  Vec v = vzero();
  v[0] = a;
  return v;
}

SolveGrid small_grid(double lo, double hi, int nt = 64, int nx = 64) {
  SolveGrid g;
  g.tau_values = {0.0};
  g.t_count = nt;
  g.x_count = nx;
  g.x_min = lo;
  g.x_max = hi;
  g.boundary_margin = 0.4;
  return g;
}

double max_abs(const std::vector<std::vector<std::vector<double>>>& v) {
  double m = 0.0;
  for (const auto& a : v)
    for (const auto& b : a)
      for (double c : b) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace

TEST_CASE("intervention operator on a constant value slice") {
  // V == c: N[V](x) = c + min_xi ell(xi) = c + 3 for ell = 3(1+|xi|),
  // attained at xi = 0.
  ProblemSpec spec = make_preset("heat-kernel");
  std::vector<double> xs{-1.0, 0.0, 1.0};
  std::vector<double> vs{4.0, 4.0, 4.0};
  auto lattice = scalar_cone_lattice(spec.cone, 11);
  CHECK(lattice.front() == 0.0);
  InterventionResult r = intervention_operator(vs, xs, 0.3, spec, lattice);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(r.values[i] == doctest::Approx(7.0));
    CHECK(r.argmin[i] == 0.0);
  }
}

TEST_CASE("zero costs give the zero value function") {
  ProblemSpec spec = make_preset("heat-kernel");
  spec.terminal_cost.params = {0.0, 0.0, 1.0, 0.0};
  SolverConfig cfg;
  QviSolution sol = solve_qvi(spec, small_grid(-2.0, 2.0, 32, 32), cfg, 2);
  CHECK(max_abs(sol.value.values) < 1e-12);
  for (const auto& a : sol.policy.intervene)
    for (const auto& b : a)
      for (char c : b) CHECK(c == 0);
}

TEST_CASE("heat kernel closed form") {
  ProblemSpec spec = make_preset("heat-kernel");
  // cos has zero slope at +-pi, matching the reflecting boundary
  SolveGrid grid = small_grid(-M_PI, M_PI, 100, 100);
  SolverConfig cfg;
  QviSolution sol = solve_qvi(spec, grid, cfg, 2);

  double worst = 0.0;
  const auto& vals = sol.value.values[0];
  for (std::size_t it = 0; it < vals.size(); ++it) {
    double t = sol.value.t_nodes[0][it];
    for (std::size_t ix = 0; ix < sol.value.x_nodes.size(); ++ix) {
      double exact = heat_kernel_value(t, sol.value.x_nodes[ix], spec.horizon);
      worst = std::max(worst, std::abs(vals[it][ix] - exact));
    }
  }
  CHECK(worst < 2e-2);

  // the impulse price exceeds any possible gain, so nobody intervenes
  for (const auto& a : sol.policy.intervene)
    for (const auto& b : a)
      for (char c : b) CHECK(c == 0);

  ResidualReport res = qvi_residual(sol.value, spec, cfg);
  CHECK(res.pct99 < 5e-2);
}

TEST_CASE("terminal slice is the obstacle-clipped terminal cost") {
  ProblemSpec spec = make_preset("impulse-active");
  SolveGrid grid = small_grid(-2.0, 2.0, 48, 48);
  SolverConfig cfg;
  QviSolution sol = solve_qvi(spec, grid, cfg, 2);
  auto lattice = scalar_cone_lattice(spec.cone, cfg.per_ray);

  std::vector<double> h(sol.value.x_nodes.size());
  for (std::size_t i = 0; i < h.size(); ++i)
    h[i] = eval_scalar(spec.terminal_cost, 1, 0.0, v1(sol.value.x_nodes[i]));
  InterventionResult nh = intervention_operator(h, sol.value.x_nodes,
                                                spec.horizon, spec, lattice);
  const auto& last = sol.value.values[0].back();
  for (std::size_t i = 0; i < h.size(); ++i)
    CHECK(last[i] == doctest::Approx(std::min(h[i], nh.values[i])));
}

TEST_CASE("cheaper impulses never raise the value") {
  ProblemSpec spec = make_preset("impulse-active");
  SolveGrid grid = small_grid(-2.0, 2.0, 48, 48);
  SolverConfig cfg;
  QviSolution base = solve_qvi(spec, grid, cfg, 2);

  ProblemSpec cheap = spec;
  cheap.impulse_cost.params = {0.05, 0.05, 1.0};
  cheap.ell0 = 0.04;
  QviSolution half = solve_qvi(cheap, grid, cfg, 2);

  for (std::size_t it = 0; it < base.value.values[0].size(); ++it)
    for (std::size_t ix = 0; ix < base.value.x_nodes.size(); ++ix)
      CHECK(half.value.values[0][it][ix] <=
            base.value.values[0][it][ix] + 1e-9);
}

TEST_CASE("scaling all costs scales the value and fixes the policy") {
  ProblemSpec spec = make_preset("impulse-active");
  SolveGrid grid = small_grid(-2.0, 2.0, 48, 48);
  SolverConfig cfg;
  QviSolution base = solve_qvi(spec, grid, cfg, 2);

  ProblemSpec doubled = spec;
  doubled.running_cost.params = {8.0, 0.0};
  doubled.terminal_cost.params = {4.0, 0.0};
  doubled.impulse_cost.params = {0.2, 0.2, 1.0};
  doubled.ell0 = 0.16;
  QviSolution twice = solve_qvi(doubled, grid, cfg, 2);

  double worst = 0.0;
  for (std::size_t it = 0; it < base.value.values[0].size(); ++it)
    for (std::size_t ix = 0; ix < base.value.x_nodes.size(); ++ix)
      worst = std::max(worst,
                       std::abs(twice.value.values[0][it][ix] -
                                2.0 * base.value.values[0][it][ix]));
  CHECK(worst < 1e-8);
  CHECK(twice.policy.intervene == base.policy.intervene);
  CHECK(twice.policy.impulse_size == base.policy.impulse_size);
}

TEST_CASE("impulse-active scenario actually intervenes, once at a time") {
  ProblemSpec spec = make_preset("impulse-active");
  SolveGrid grid = small_grid(-2.5, 2.5, 64, 64);
  SolverConfig cfg;
  QviSolution sol = solve_qvi(spec, grid, cfg, 2);

  std::size_t hits = 0;
  for (const auto& a : sol.policy.intervene)
    for (const auto& b : a)
      for (char c : b) hits += (c != 0);
  CHECK(hits > 0);

  DoubleImpulseReport rep = check_no_double_impulse(sol, spec, cfg);
  CHECK(rep.ok);
  CHECK(rep.intervention_nodes == hits);
  CHECK(rep.violations.empty());

  ResidualReport res = qvi_residual(sol.value, spec, cfg);
  CHECK(res.pct99 < 5e-2);
}

TEST_CASE("regularity summary") {
  ProblemSpec spec = make_preset("heat-kernel");
  SolveGrid grid = small_grid(-M_PI, M_PI, 64, 64);
  QviSolution sol = solve_qvi(spec, grid, SolverConfig{}, 2);
  RegularityReport rep = check_regularity(sol.value, spec);
  CHECK(rep.bounds_ok);
  CHECK(rep.v_min >= -1e-9);
  CHECK(rep.v_max <= rep.bound + 1e-9);
  // value is 1 + cos(x) e^{...}: x-Lipschitz constant near 1
  CHECK(rep.x_lipschitz < 1.2);
}

TEST_CASE("semiconvexity constant is stable under refinement") {
  ProblemSpec spec = make_preset("heat-kernel");
  SolverConfig cfg;
  QviSolution a = solve_qvi(spec, small_grid(-M_PI, M_PI, 48, 48), cfg, 2);
  QviSolution b = solve_qvi(spec, small_grid(-M_PI, M_PI, 96, 96), cfg, 2);
  double ka = check_semiconvexity(a.value).K_sc;
  double kb = check_semiconvexity(b.value).K_sc;
  // chords of 1 + cos(x) e^{-(T-t)/2} dip at most with curvature 1
  CHECK(ka <= 1.1);
  CHECK(kb <= 1.1);
  CHECK(std::abs(ka - kb) < 0.5 * std::max(1.0, ka));
}

TEST_CASE("dynamic programming consistency at sampled points") {
  ProblemSpec spec = make_preset("heat-kernel");
  SolveGrid grid = small_grid(-M_PI, M_PI, 64, 64);
  QviSolution sol = solve_qvi(spec, grid, SolverConfig{}, 2);
  DppReport rep = check_dpp(spec, sol, 10, 0.05, 4000, 21, 2);
  REQUIRE(rep.points.size() == 10);
  CHECK(rep.all_ok);
  for (const auto& p : rep.points) {
    CHECK(p.inequality_ok);
    if (p.continuation) CHECK(p.equality_ok);
  }
}

TEST_CASE("grid policy feeds the path evaluator") {
  ProblemSpec spec = make_preset("heat-kernel");
  SolveGrid grid = small_grid(-M_PI, M_PI, 48, 48);
  QviSolution sol = solve_qvi(spec, grid, SolverConfig{}, 2);
  GridPolicy pol(sol.policy, 0);
  PolicyEvaluation ev = evaluate_policy(spec, pol, v1(0.0), 500, 40, 9, 8, 2);
  // impulses cost at least 3 and can save at most 2: never fired
  REQUIRE(!ev.kappa_histogram.empty());
  CHECK(ev.kappa_histogram[0] == 500);
  CHECK_FALSE(ev.cap_reached);
}
