#pragma once

// Spike perturbations of an impulse control, variational processes, Taylor
// expansion order checks, the two duality identities, the variational
// inequality, and the maximum-principle condition scores. Scalar state.

#include <string>
#include <vector>

#include "impulse/adjoint.hpp"

namespace ic {

struct Perturbation {
  int index = 0;         // impulse index (0-based)
  double eps = 0.0;      // size weight in (0,1)
  double eps_bar = 0.0;  // time shift
  bool forward = true;
  double eta = 0.0;      // target size in the cone
};

// Moves impulse `index` to tau_i +/- eps_bar with size (1-eps)xi_i + eps*eta.
ImpulseControl perturb_control(const ImpulseControl& optimal,
                               const Perturbation& p, double T,
                               const ConeSpec& cone);

struct VariationalProcesses {
  // all [path][node] on the bundle grid (which must contain tau_i + eps_bar)
  std::vector<std::vector<double>> Xpert;
  std::vector<std::vector<double>> X1hat, X2hat, X1, X2;
  std::vector<std::vector<double>> b1, s1, b2, s2;  // source terms
  std::vector<char> window;  // node flag for [tau_i, tau_i + eps_bar)
  double xi_bar = 0.0;       // optimal size of the perturbed impulse
  double xi_dir = 0.0;       // eta - xi_bar
  double eps = 0.0, eps_bar = 0.0;
  int impulse = 0;
};

VariationalProcesses simulate_variational(const ProblemSpec& spec,
                                          const FrozenCoefficients& frozen,
                                          const Perturbation& p,
                                          int threads = 1);

struct ExpansionReport {
  std::vector<double> eps;
  std::vector<double> est_dX, est_X1, est_rem1, est_rem2;
  double slope_X1 = 0.0, slope_rem1 = 0.0, slope_rem2 = 0.0;
  bool pass_X1 = false, pass_rem1 = false, pass_rem2 = false;
  bool inconclusive = false;
};

ExpansionReport check_expansion_orders(const ProblemSpec& spec,
                                       const ImpulseControl& optimal,
                                       double x0, int impulse_index,
                                       double eta,
                                       const std::vector<double>& eps_grid,
                                       double coupling, int m,
                                       std::size_t paths, int base_steps,
                                       std::uint64_t seed, int threads = 1);

struct DualityResult {
  double lhs = 0.0, rhs = 0.0, gap = 0.0;
  double stderr_ = 0.0;  // combined from both sides
};

DualityResult duality_first(const FrozenCoefficients& frozen,
                            const FirstAdjoint& first,
                            const VariationalProcesses& var, int threads = 1);

DualityResult duality_second(const FrozenCoefficients& frozen,
                             const FirstAdjoint& first,
                             const SecondAdjoint& second,
                             const VariationalProcesses& var, int threads = 1);

struct VariationalInequalityResult {
  double formula = 0.0, formula_stderr = 0.0;
  double direct = 0.0, direct_stderr = 0.0;
};

VariationalInequalityResult variational_inequality(
    const ProblemSpec& spec, const FrozenCoefficients& frozen,
    const FirstAdjoint& first, const SecondAdjoint& second,
    const HamiltonianPath& ham, const VariationalProcesses& var,
    const Perturbation& p, int threads = 1);

struct MpCondition {
  std::string tag;  // MP1 / MP2 / MP3 / MP4 / MP5
  double value = 0.0;
  double stderr_ = 0.0;
  double eta = 0.0;  // MP2 only
  bool pass = false;
};

struct MPReport {
  struct PerImpulse {
    int index = 0;
    MpCondition mp1;
    std::vector<MpCondition> mp2;  // over the eta grid
    MpCondition stationarity;      // MP3, MP4 or MP5 by the boundary case
    bool mp1_skipped = false;      // eps_bar == 0 runs perturb sizes only
  };
  std::vector<PerImpulse> impulses;
  bool all_pass = false;
};

MPReport check_mp_conditions(const ProblemSpec& spec,
                             const FrozenCoefficients& frozen,
                             const FirstAdjoint& first,
                             const SecondAdjoint& second,
                             const HamiltonianPath& ham,
                             const std::vector<double>& eta_grid,
                             double eps_bar_window, int threads = 1);

}  // namespace ic
