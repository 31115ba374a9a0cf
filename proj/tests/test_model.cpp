#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "impulse/model.hpp"
#include "impulse/presets.hpp"

using namespace ic;

namespace {

Vec v1(double a) {
  Vec v = vzero();
  v[0] = a;
  return v;
}

Vec v2(double a, double b) {
  Vec v = vzero();
  v[0] = a;
  v[1] = b;
  return v;
}

// central-difference check for the per-component x derivatives
void check_derivatives(const CoefficientFamily& f, int n, double tau,
                       const Vec& x) {
  const double h = 1e-6;
  Vec d1 = eval_vec_dx(f, n, tau, x);
  Vec d2 = eval_vec_dxx(f, n, tau, x);
  for (int i = 0; i < n; ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    double fp = eval_vec(f, n, tau, xp)[i];
    double fm = eval_vec(f, n, tau, xm)[i];
    double f0 = eval_vec(f, n, tau, x)[i];
    CHECK(d1[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
    CHECK(d2[i] == doctest::Approx((fp - 2 * f0 + fm) / (h * h)).epsilon(1e-3));
  }
}

}  // namespace

TEST_CASE("coefficient forms evaluate and differentiate correctly") {
  CoefficientFamily f;

  SUBCASE("constant") {
    f.kind = Form::Constant;
    f.params = {2.5};
    CHECK(eval_vec(f, 1, 0.3, v1(7.0))[0] == 2.5);
    CHECK(eval_vec_dx(f, 1, 0.3, v1(7.0))[0] == 0.0);
    CHECK(eval_vec_dxx(f, 1, 0.3, v1(7.0))[0] == 0.0);
  }

  SUBCASE("affine") {
    f.kind = Form::AffineInX;
    f.params = {1.0, -0.5};
    CHECK(eval_vec(f, 1, 0.0, v1(2.0))[0] == doctest::Approx(0.0));
    CHECK(eval_vec_dx(f, 1, 0.0, v1(2.0))[0] == -0.5);
    check_derivatives(f, 1, 0.0, v1(0.7));
  }

  SUBCASE("bounded rational") {
    f.kind = Form::BoundedRational;
    f.params = {4.0, 1.0};
    CHECK(eval_vec(f, 1, 0.0, v1(1.0))[0] == doctest::Approx(2.5));
    check_derivatives(f, 1, 0.0, v1(0.3));
    check_derivatives(f, 1, 0.0, v1(-1.8));
  }

  SUBCASE("bounded trig") {
    f.kind = Form::BoundedTrig;
    f.params = {1.0, 1.0, 1.0, 0.0};
    CHECK(eval_vec(f, 1, 0.0, v1(0.0))[0] == doctest::Approx(2.0));
    CHECK(eval_vec(f, 1, 0.0, v1(M_PI))[0] == doctest::Approx(0.0));
    check_derivatives(f, 1, 0.0, v1(0.4));
  }

  SUBCASE("two components, diagonal structure") {
    f.kind = Form::AffineInX;
    f.params = {1.0, 2.0, 3.0, 4.0};  // comp 0: 1+2x, comp 1: 3+4x
    Vec r = eval_vec(f, 2, 0.0, v2(1.0, 1.0));
    CHECK(r[0] == doctest::Approx(3.0));
    CHECK(r[1] == doctest::Approx(7.0));
    CHECK(eval_scalar(f, 2, 0.0, v2(1.0, 1.0)) == doctest::Approx(10.0));
  }
}

TEST_CASE("tau factors") {
  CoefficientFamily f;
  f.kind = Form::Constant;
  f.params = {2.0};

  f.tau_kind = TauForm::Affine;
  f.tau_params = {1.0, -0.2};
  CHECK(tau_factor(f, 0.5) == doctest::Approx(0.9));
  CHECK(tau_factor_d(f, 0.5) == doctest::Approx(-0.2));
  CHECK(eval_vec(f, 1, 0.5, v1(9.0))[0] == doctest::Approx(1.8));
  CHECK(eval_vec_dtau(f, 1, 0.5, v1(9.0))[0] == doctest::Approx(-0.4));

  f.tau_kind = TauForm::BoundedTrig;
  f.tau_params = {1.0, 0.5, 2.0};
  double tau = 0.3;
  CHECK(tau_factor(f, tau) == doctest::Approx(1.0 + 0.5 * std::cos(2 * tau)));
  CHECK(tau_factor_d(f, tau) == doctest::Approx(-std::sin(2 * tau)));
}

TEST_CASE("impulse cost and derivatives") {
  ProblemSpec spec = make_preset("heat-kernel");  // ell = 3 (1 + |xi|)
  CHECK(impulse_cost(spec, 0.0, v1(2.0)) == doctest::Approx(9.0));
  CHECK(impulse_cost(spec, 0.7, v1(2.0)) == doctest::Approx(9.0));
  CHECK(impulse_cost_dtau(spec, 0.7, v1(2.0)) == 0.0);
  CHECK(impulse_cost_dxi(spec, 0.0, v1(2.0))[0] == doctest::Approx(3.0));

  ProblemSpec ia = make_preset("impulse-active");
  // (0.1 - 0.02 tau)(1 + |xi|)
  CHECK(impulse_cost(ia, 0.5, v1(1.0)) == doctest::Approx(0.18));
  CHECK(impulse_cost_dtau(ia, 0.5, v1(1.0)) == doctest::Approx(-0.04));
  CHECK(impulse_cost_dxi(ia, 0.5, v1(1.0))[0] == doctest::Approx(0.09));
}

TEST_CASE("cone membership via nonnegative least squares") {
  ConeSpec cone;
  cone.dimension = 2;
  cone.generators = {v2(1.0, 0.0), v2(0.0, 1.0)};
  cone.size_cap = 5.0;

  CHECK(cone_contains(cone, v2(1.0, 2.0)));
  CHECK(cone_contains(cone, v2(0.0, 0.0)));
  CHECK(cone_contains(cone, v2(3.0, 0.0)));
  CHECK_FALSE(cone_contains(cone, v2(-1.0, 1.0)));
  CHECK_FALSE(cone_contains(cone, v2(1.0, -1e-3)));

  // non-orthogonal pair: span is the wedge between the generators
  double s = 1.0 / std::sqrt(2.0);
  cone.generators = {v2(1.0, 0.0), v2(s, s)};
  CHECK(cone_contains(cone, v2(1.0, 0.5)));
  CHECK_FALSE(cone_contains(cone, v2(0.0, 1.0)));

  ConeSpec half;
  half.dimension = 1;
  half.generators = {v1(1.0)};
  CHECK(cone_contains(half, v1(4.0)));
  CHECK_FALSE(cone_contains(half, v1(-0.1)));
}

TEST_CASE("cone lattice") {
  ConeSpec cone;
  cone.dimension = 1;
  cone.generators = {v1(1.0)};
  cone.size_cap = 2.0;
  auto pts = cone_grid(cone, 3);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0][0] == 0.0);
  CHECK(pts[1][0] == doctest::Approx(1.0));
  CHECK(pts[2][0] == doctest::Approx(2.0));

  cone.dimension = 2;
  cone.generators = {v2(1.0, 0.0), v2(0.0, 1.0)};
  auto pts2 = cone_grid(cone, 2);
  CHECK(pts2.size() == 4);
  for (const auto& p : pts2) CHECK(cone_contains(cone, p));
}

TEST_CASE("control normalization") {
  ConeSpec cone;
  cone.dimension = 1;
  cone.generators = {v1(1.0)};

  std::vector<Impulse> raw{{0.7, v1(1.0)}, {0.3, v1(2.0)}};
  auto c = normalize_control(raw, 0.0, 1.0, cone);
  REQUIRE(c.impulses.size() == 2);
  CHECK(c.impulses[0].time == 0.3);
  CHECK(c.impulses[1].time == 0.7);

  CHECK_THROWS_AS(
      normalize_control({{0.5, v1(1.0)}, {0.5, v1(1.0)}}, 0.0, 1.0, cone),
      IcError);
  CHECK_THROWS_AS(normalize_control({{1.5, v1(1.0)}}, 0.0, 1.0, cone),
                  IcError);
  CHECK_THROWS_AS(normalize_control({{0.5, v1(-1.0)}}, 0.0, 1.0, cone),
                  IcError);
}

TEST_CASE("assumption checks accept the shipped scenarios") {
  for (const auto& name : preset_names()) {
    ProblemSpec spec = make_preset(name);
    AssumptionReport rep = validate_problem(spec, 400, 7);
    INFO("preset ", name, " detail: ", rep.failure_detail);
    CHECK(rep.all_ok());
    CHECK(rep.subadditivity_margin > 0.0);
  }
  // heat-kernel: ell(xi)+ell(xi') - ell(xi+xi') = 3 exactly
  AssumptionReport rep = validate_problem(make_preset("heat-kernel"), 400, 7);
  CHECK(rep.subadditivity_margin == doctest::Approx(3.0));
}

TEST_CASE("assumption checks flag bad cost structures") {
  ProblemSpec spec = make_preset("heat-kernel");

  SUBCASE("impulse cost without a fixed part fails the lower bound") {
    spec.impulse_cost.params = {0.0, 1.0, 1.0};  // ell = |xi|
    spec.ell0 = 0.5;
    AssumptionReport rep = validate_problem(spec, 400, 7);
    CHECK_FALSE(rep.ell_lower_ok);
    CHECK_FALSE(rep.subadditive_ok);
  }

  SUBCASE("impulse cost increasing in tau fails monotonicity") {
    spec.impulse_cost.tau_kind = TauForm::Affine;
    spec.impulse_cost.tau_params = {1.0, 0.5};
    AssumptionReport rep = validate_problem(spec, 400, 7);
    CHECK_FALSE(rep.ell_monotone_ok);
  }

  SUBCASE("negative running cost fails nonnegativity") {
    spec.running_cost.kind = Form::AffineInX;
    spec.running_cost.params = {0.0, 1.0};
    AssumptionReport rep = validate_problem(spec, 400, 7);
    CHECK_FALSE(rep.nonneg_ok);
  }
}

TEST_CASE("validation report is deterministic in the seed") {
  ProblemSpec spec = make_preset("loan");
  AssumptionReport a = validate_problem(spec, 300, 42);
  AssumptionReport b = validate_problem(spec, 300, 42);
  CHECK(a.subadditivity_margin == b.subadditivity_margin);
  CHECK(a.lipschitz_K == b.lipschitz_K);
  CHECK(a.sup_g == b.sup_g);
  CHECK(a.tau_modulus_values == b.tau_modulus_values);
}
