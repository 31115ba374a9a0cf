#pragma once

// Frozen coefficient processes along an optimal pair and the two adjoint
// backward equations, solved by least-squares regression Monte Carlo on the
// shared path bundle. Scalar state (n = 1), scalar Brownian driver.

#include <cstdint>
#include <vector>

#include "impulse/model.hpp"
#include "impulse/simulate.hpp"

namespace ic {

// Bundle of state paths under a fixed (deterministic-time) impulse control,
// all later computations reuse these paths and increments.
struct PathBundle {
  ImpulseControl control;
  TimeGrid grid;
  double x0 = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> X;   // [path][node], post-impulse values
  std::vector<std::vector<double>> dW;  // [path][interval]
  std::vector<int> active_count;        // impulses active at node (all paths)
};

PathBundle make_bundle(const ProblemSpec& spec, const ImpulseControl& control,
                       double x0, std::size_t paths, int base_steps,
                       std::uint64_t seed, int threads = 1,
                       const std::vector<double>& extra_nodes = {});

// First/second x-derivatives of drift, diffusion and running cost summed
// over the active components, plus the per-impulse tau-derivative streams.
// Second-derivative aggregates carry the 1/2 factor; the Hamiltonian second
// derivative (hxx_ham) does not.
struct FrozenCoefficients {
  const ProblemSpec* spec = nullptr;
  const PathBundle* bundle = nullptr;
  bool stacking = true;  // sum over active components vs tau0 only

  double Bx(int node, double x) const;
  double Sx(int node, double x) const;
  double Bxx_half(int node, double x) const;
  double Sxx_half(int node, double x) const;
  double Gx(int node, double x) const;
  double Gxx_half(int node, double x) const;
  double Hx(double xT) const;
  double Hxx_half(double xT) const;

  // raw (un-halved) second derivatives, used by the Hamiltonian
  double bxx_sum(int node, double x) const;
  double sxx_sum(int node, double x) const;
  double gxx_sum(int node, double x) const;
  double gx_sum(int node, double x) const;
  double b_sum(int node, double x) const;
  double s_sum(int node, double x) const;
  double g_sum(int node, double x) const;

  // per-impulse streams, zero before the impulse time
  double b_tau(int impulse, int node, double x) const;
  double sig_tau(int impulse, int node, double x) const;
  double g_tau(int impulse, int node, double x) const;

  std::vector<std::vector<std::vector<double>>> zeta;  // [impulse][path][node]
  std::vector<double> ell_tau;  // per impulse, at (tau_i, xi_i)
  std::vector<double> ell_xi;
  bool fd_check_ok = false;
};

FrozenCoefficients compute_frozen(const ProblemSpec& spec,
                                  const PathBundle& bundle,
                                  bool stacking = true);

// Standalone zeta integration (also called from compute_frozen).
std::vector<std::vector<std::vector<double>>> compute_zeta(
    const FrozenCoefficients& frozen);

struct FirstAdjoint {
  int degree = 3;
  std::vector<std::vector<double>> Y, Z;          // [path][node]
  std::vector<std::vector<double>> y_coeff;       // per node, diagnostics
  std::vector<std::vector<double>> z_coeff;
  bool degree_reduced = false;
};

struct SecondAdjoint {
  int degree = 3;
  std::vector<std::vector<double>> P, Q;
  std::vector<std::vector<double>> p_coeff, q_coeff;
  bool degree_reduced = false;
};

FirstAdjoint solve_first_adjoint(const FrozenCoefficients& frozen,
                                 int basis_degree = 3, int threads = 1);

SecondAdjoint solve_second_adjoint(const FrozenCoefficients& frozen,
                                   const FirstAdjoint& first,
                                   int basis_degree = 3, int threads = 1);

struct HamiltonianPath {
  std::vector<std::vector<double>> H, Hx, Hxx;  // [path][node]
};

HamiltonianPath hamiltonian_bundle(const FrozenCoefficients& frozen,
                                   const FirstAdjoint& first, int threads = 1);

}  // namespace ic
