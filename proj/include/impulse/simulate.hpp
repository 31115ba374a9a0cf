#pragma once

// Path discretization and Monte Carlo evaluation of the cost functional.
// Impulse times are forced onto the grid; jumps are applied after the
// diffusion step at the impulse node.

#include <cstdint>
#include <vector>

#include "impulse/model.hpp"

namespace ic {

struct TimeGrid {
  double start = 0.0;
  double end = 1.0;
  int base_steps = 0;
  std::vector<double> nodes;           // strictly increasing, includes t, T
  std::vector<int> impulse_nodes;      // node index of impulse j
};

struct BrownianGrid {
  std::vector<double> increments;  // dW_k over [node_k, node_{k+1})
  std::uint64_t seed = 0;
  std::uint64_t path_id = 0;
};

struct Trajectory {
  std::vector<Vec> pre;          // value at node before any jump
  std::vector<Vec> post;         // value after the jump (equals pre elsewhere)
  std::vector<int> active_count; // impulses activated at or before the node
};

struct CostEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t path_count = 0;
  double running = 0.0;
  double impulse = 0.0;
  double terminal = 0.0;
};

TimeGrid make_time_grid(double t, double T, const ImpulseControl& control,
                        int base_steps);

// Grid variant that also includes extra required nodes (perturbed impulse
// times, probe times); used wherever several processes must share noise.
TimeGrid make_time_grid_extra(double t, double T, const ImpulseControl& control,
                              int base_steps,
                              const std::vector<double>& extra_nodes);

BrownianGrid make_brownian(const TimeGrid& grid, std::uint64_t seed,
                           std::uint64_t path_id);

Trajectory simulate_state(const ProblemSpec& spec, const ImpulseControl& control,
                          const Vec& x0, const TimeGrid& grid,
                          const BrownianGrid& noise);

// Per-path cost along an already simulated trajectory (left-endpoint
// quadrature for the running integral).
struct CostParts {
  double running = 0.0, impulse = 0.0, terminal = 0.0;
  double total() const { return running + impulse + terminal; }
};
CostParts path_cost(const ProblemSpec& spec, const ImpulseControl& control,
                    const TimeGrid& grid, const Trajectory& traj);

CostEstimate estimate_cost(const ProblemSpec& spec,
                           const ImpulseControl& control, const Vec& x0,
                           std::size_t paths, int base_steps,
                           std::uint64_t seed, int threads = 1);

// Minimal feedback-policy interface; the qvi module adapts its PolicyMap to
// this so path evaluation does not depend on the solver types.
class FeedbackPolicy {
 public:
  virtual ~FeedbackPolicy() = default;
  // Returns true and fills xi when (t, x) is an intervention point.
  virtual bool intervene(double t, const Vec& x, Vec* xi) const = 0;
};

struct PolicyEvaluation {
  CostEstimate cost;
  std::vector<std::size_t> kappa_histogram;  // impulse count distribution
  bool cap_reached = false;
  // per-impulse-event statistics over paths: (time, size) samples
  std::vector<double> impulse_times;
  std::vector<double> impulse_sizes;
};

PolicyEvaluation evaluate_policy(const ProblemSpec& spec,
                                 const FeedbackPolicy& policy, const Vec& x0,
                                 std::size_t paths, int base_steps,
                                 std::uint64_t seed, std::size_t impulse_cap,
                                 int threads = 1);

struct ContinuityProbe {
  double sup_moment_p2 = 0.0;  // E sup |X - X'|^2
  double sup_moment_p4 = 0.0;
};

ContinuityProbe continuity_probe(const ProblemSpec& spec,
                                 const ImpulseControl& control, const Vec& x0,
                                 const Vec& x0p, double tau0, double tau0p,
                                 std::size_t paths, int base_steps,
                                 std::uint64_t seed, int threads = 1);

}  // namespace ic
