#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "impulse/presets.hpp"
#include "impulse/simulate.hpp"

using namespace ic;

namespace {

Vec v1(double a) {
  Vec v = vzero();
  v[0] = a;
  return v;
}

ImpulseControl one_impulse(double t, double size) {
  ImpulseControl c;
  c.impulses.push_back({t, v1(size)});
  return c;
}

}  // namespace

TEST_CASE("time grid forces impulse times onto the nodes") {
  ImpulseControl c = one_impulse(0.3, 1.0);
  TimeGrid g = make_time_grid(0.0, 1.0, c, 16);
  // 17 base nodes plus the off-lattice impulse time
  REQUIRE(g.nodes.size() == 18);
  REQUIRE(g.impulse_nodes.size() == 1);
  CHECK(g.nodes[g.impulse_nodes[0]] == doctest::Approx(0.3));
  for (std::size_t k = 1; k < g.nodes.size(); ++k)
    CHECK(g.nodes[k] > g.nodes[k - 1]);

  // impulse exactly on a base node: no duplicate
  TimeGrid g2 = make_time_grid(0.0, 1.0, one_impulse(0.25, 1.0), 16);
  CHECK(g2.nodes.size() == 17);
  CHECK(g2.nodes[g2.impulse_nodes[0]] == doctest::Approx(0.25));

  TimeGrid g3 = make_time_grid_extra(0.0, 1.0, c, 16, {0.3, 0.61});
  CHECK(g3.nodes.size() == 19);  // 0.3 deduplicated, 0.61 added
}

TEST_CASE("deterministic dynamics") {
  ProblemSpec spec = make_preset("heat-kernel");
  spec.diffusion.params = {0.0};

  SUBCASE("pure jump") {
    ImpulseControl c = one_impulse(0.5, 2.0);
    TimeGrid g = make_time_grid(0.0, 1.0, c, 20);
    BrownianGrid w = make_brownian(g, 1, 0);
    Trajectory tr = simulate_state(spec, c, v1(0.0), g, w);
    int jn = g.impulse_nodes[0];
    CHECK(tr.pre[jn][0] == 0.0);
    CHECK(tr.post[jn][0] == 2.0);
    CHECK(tr.post.back()[0] == 2.0);
    CHECK(tr.active_count[jn] == 1);
    CHECK(tr.active_count[jn - 1] == 0);
  }

  SUBCASE("impulses stack the drift") {
    // b = 1 per component; a size-0 impulse at 0.5 doubles the drift there,
    // so X(1) = 1*0.5 + 2*0.5 = 1.5 under stacking semantics.
    spec.drift.params = {1.0};
    ImpulseControl c = one_impulse(0.5, 0.0);
    TimeGrid g = make_time_grid(0.0, 1.0, c, 20);
    BrownianGrid w = make_brownian(g, 1, 0);
    Trajectory tr = simulate_state(spec, c, v1(0.0), g, w);
    CHECK(tr.post.back()[0] == doctest::Approx(1.5));

    spec.semantics = Semantics::Frozen;
    Trajectory fr = simulate_state(spec, c, v1(0.0), g, w);
    CHECK(fr.post.back()[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("cost of a deterministic impulse plan") {
  ProblemSpec spec = make_preset("heat-kernel");
  spec.diffusion.params = {0.0};

  // no impulses: J = h(x0) = 1 + cos(0) = 2, exactly
  CostEstimate base = estimate_cost(spec, {}, v1(0.0), 100, 20, 3);
  CHECK(base.mean == doctest::Approx(2.0));
  CHECK(base.stderr_ == doctest::Approx(0.0));

  // jump to pi at t = 0.5: terminal h = 0, impulse charge 3(1 + pi)
  ImpulseControl c = one_impulse(0.5, M_PI);
  CostEstimate moved = estimate_cost(spec, c, v1(0.0), 100, 20, 3);
  CHECK(moved.mean == doctest::Approx(3.0 * (1.0 + M_PI)));
  CHECK(moved.impulse == doctest::Approx(3.0 * (1.0 + M_PI)));
  CHECK(moved.terminal == doctest::Approx(0.0));
  CHECK(moved.running == doctest::Approx(0.0));
}

TEST_CASE("Monte Carlo terminal mean matches E cos(W_1)") {
  ProblemSpec spec = make_preset("heat-kernel");
  // h = 1 + cos x, X = W, so E J = 1 + e^{-1/2}
  CostEstimate est = estimate_cost(spec, {}, v1(0.0), 20000, 64, 11, 4);
  double target = 1.0 + std::exp(-0.5);
  CHECK(std::abs(est.mean - target) < 3.0 * est.stderr_ + 1e-3);
}

TEST_CASE("cost decomposition sums to the total") {
  ProblemSpec spec = make_preset("loan");
  ImpulseControl c = one_impulse(0.4, 1.0);
  CostEstimate est = estimate_cost(spec, c, v1(0.2), 2000, 40, 5, 2);
  CHECK(est.mean ==
        doctest::Approx(est.running + est.impulse + est.terminal).epsilon(1e-12));
  // one impulse of size 1 at tau = 0.4: charge (1 - 0.04)(0.5 + 0.4) exactly
  CHECK(est.impulse == doctest::Approx(0.96 * 0.9));
}

TEST_CASE("path generation is reproducible and worker-count independent") {
  ProblemSpec spec = make_preset("loan");
  ImpulseControl c = one_impulse(0.4, 1.0);
  CostEstimate a = estimate_cost(spec, c, v1(0.2), 4000, 50, 123, 1);
  CostEstimate b = estimate_cost(spec, c, v1(0.2), 4000, 50, 123, 4);
  CostEstimate d = estimate_cost(spec, c, v1(0.2), 4000, 50, 123, 7);
  CHECK(a.mean == b.mean);
  CHECK(a.mean == d.mean);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(a.running == d.running);

  CostEstimate other = estimate_cost(spec, c, v1(0.2), 4000, 50, 124, 1);
  CHECK(a.mean != other.mean);
}

TEST_CASE("Brownian increments have the right scale") {
  TimeGrid g = make_time_grid(0.0, 1.0, {}, 50);
  double dt = 1.0 / 50.0;
  KahanSum sum, sumsq;
  std::size_t count = 0;
  for (std::uint64_t p = 0; p < 2000; ++p) {
    BrownianGrid w = make_brownian(g, 99, p);
    REQUIRE(w.increments.size() == 50);
    for (double dw : w.increments) {
      sum.add(dw);
      sumsq.add(dw * dw);
      ++count;
    }
  }
  double mean = sum.value() / count;
  double var = sumsq.value() / count - mean * mean;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(dt / count));
  CHECK(var == doctest::Approx(dt).epsilon(0.02));
}

TEST_CASE("frozen and stacking agree without impulses") {
  ProblemSpec spec = make_preset("loan");
  CostEstimate a = estimate_cost(spec, {}, v1(0.1), 500, 30, 17);
  spec.semantics = Semantics::Frozen;
  CostEstimate b = estimate_cost(spec, {}, v1(0.1), 500, 30, 17);
  CHECK(a.mean == b.mean);
}

TEST_CASE("continuity probe") {
  ProblemSpec spec = make_preset("loan");
  ImpulseControl c = one_impulse(0.4, 1.0);

  ContinuityProbe same =
      continuity_probe(spec, c, v1(0.2), v1(0.2), 0.0, 0.0, 200, 40, 5);
  CHECK(same.sup_moment_p2 == 0.0);

  ContinuityProbe near =
      continuity_probe(spec, c, v1(0.2), v1(0.21), 0.0, 0.0, 500, 40, 5);
  ContinuityProbe far =
      continuity_probe(spec, c, v1(0.2), v1(0.5), 0.0, 0.0, 500, 40, 5);
  CHECK(near.sup_moment_p2 > 0.0);
  CHECK(near.sup_moment_p2 < far.sup_moment_p2);

  // tau-independent coefficients: changing tau0 alone changes nothing
  ProblemSpec la = make_preset("linear-adjoint");
  ContinuityProbe tau_shift =
      continuity_probe(la, c, v1(0.2), v1(0.2), 0.0, 0.3, 200, 40, 5);
  CHECK(tau_shift.sup_moment_p2 == 0.0);
}
