#pragma once

// Backward finite-difference solver for the parameter-indexed obstacle
// problem min{V_t + H, N[V] - V} = 0 on [tau, T] x [x_min, x_max], n = 1,
// with policy extraction and the associated empirical checks.

#include <memory>
#include <vector>

#include "impulse/model.hpp"
#include "impulse/simulate.hpp"

namespace ic {

struct SolveGrid {
  std::vector<double> tau_values;  // parameter slices
  int t_count = 64;                // nodes per slice, uniform on [tau, T]
  int x_count = 64;
  double x_min = -1.0;
  double x_max = 1.0;
  double boundary_margin = 0.0;    // x-band excluded from residual checks
};

struct SolverConfig {
  double tol = 1e-8;        // fixed-point sup-change tolerance
  int max_fixed_point = 50;
  double cfl_safety = 0.9;
  int per_ray = 41;         // impulse lattice resolution
};

struct ValueFunction {
  SolveGrid grid;
  std::vector<double> x_nodes;
  std::vector<std::vector<double>> t_nodes;             // [tau][t]
  std::vector<std::vector<std::vector<double>>> values; // [tau][t][x]
};

struct PolicyMap {
  SolveGrid grid;
  std::vector<double> x_nodes;
  std::vector<std::vector<double>> t_nodes;
  std::vector<std::vector<std::vector<char>>> intervene;    // [tau][t][x]
  std::vector<std::vector<std::vector<double>>> impulse_size;
};

// Linear interpolation with clamped extrapolation beyond the grid ends.
double interp_clamped(const std::vector<double>& xs,
                      const std::vector<double>& vs, double x);

struct InterventionResult {
  std::vector<double> values;  // N[V] per x node
  std::vector<double> argmin;  // minimizing displacement per x node
};

InterventionResult intervention_operator(const std::vector<double>& v_slice,
                                         const std::vector<double>& x_nodes,
                                         double t, const ProblemSpec& spec,
                                         const std::vector<double>& xi_lattice);

// Scalar displacements of the cone lattice (n = 1), zero included, sorted.
std::vector<double> scalar_cone_lattice(const ConeSpec& cone, int per_ray);

struct QviSolution {
  ValueFunction value;
  PolicyMap policy;
};

QviSolution solve_qvi(const ProblemSpec& spec, const SolveGrid& grid,
                      const SolverConfig& cfg, int threads = 1);

struct ResidualReport {
  double max_abs = 0.0;
  double pct99 = 0.0;
  std::size_t node_count = 0;
};

ResidualReport qvi_residual(const ValueFunction& v, const ProblemSpec& spec,
                            const SolverConfig& cfg);

struct DppPoint {
  int tau_idx = 0;
  double t = 0.0;
  double x = 0.0;
  double value = 0.0;       // V(tau, t, x)
  double mc_value = 0.0;    // E[V(tau, t+delta, X) + running]
  double stderr_ = 0.0;
  bool continuation = false;  // strictly below the obstacle
  bool inequality_ok = false; // V <= mc + band
  bool equality_ok = false;   // |V - mc| <= band (continuation only)
};

struct DppReport {
  std::vector<DppPoint> points;
  bool all_ok = false;
};

DppReport check_dpp(const ProblemSpec& spec, const QviSolution& sol,
                    int sample_points, double delta, std::size_t paths,
                    std::uint64_t seed, int threads = 1);

struct RegularityReport {
  double v_min = 0.0, v_max = 0.0;
  double bound = 0.0;        // T sup g + sup h on the grid
  bool bounds_ok = false;
  double t_holder = 0.0;     // max |dV| / dt^{1/2}
  double x_lipschitz = 0.0;
  double tau_variation = 0.0;
};

RegularityReport check_regularity(const ValueFunction& v,
                                  const ProblemSpec& spec);

struct SemiconvexityReport {
  double K_sc = 0.0;  // smallest feasible constant on the grid
};

SemiconvexityReport check_semiconvexity(const ValueFunction& v,
                                        double interp_slack = 1e-9);

struct DoubleImpulseReport {
  bool ok = false;
  std::size_t intervention_nodes = 0;
  std::vector<std::array<int, 3>> violations;  // (tau, t, x) indices
};

DoubleImpulseReport check_no_double_impulse(const QviSolution& sol,
                                            const ProblemSpec& spec,
                                            const SolverConfig& cfg);

// Adapter so simulate::evaluate_policy can consume a PolicyMap.
class GridPolicy : public FeedbackPolicy {
 public:
  GridPolicy(const PolicyMap& map, int tau_idx);
  bool intervene(double t, const Vec& x, Vec* xi) const override;

 private:
  const PolicyMap& map_;
  int tau_idx_;
};

}  // namespace ic
