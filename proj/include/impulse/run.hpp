#pragma once

// Command orchestration shared by the C API and the test suite: resolves a
// RunConfig into module calls, writes deterministic CSV/JSON artifacts, and
// returns the process exit code.

#include <string>

#include "impulse/config.hpp"
#include "impulse/qvi.hpp"

namespace ic {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUnknownPreset = 2;
inline constexpr int kExitBadConfig = 3;
inline constexpr int kExitMissingArtifact = 4;

// Commands: validate, simulate, solve-qvi, check-dpp, adjoint, check-mp,
// expansion-order, report. Unknown commands map to the bad-config code.
int run_command(const std::string& command, const RunConfig& cfg);

// Turns the feedback policy of a solved value function into a fixed-moment
// impulse control: realizes the policy over Monte Carlo paths, keeps the
// modal impulse count with the most frequent intervention times, then does a
// small common-noise search over sizes. Empty when the policy never fires.
ImpulseControl extract_qvi_control(const ProblemSpec& spec,
                                   const QviSolution& sol, double x0,
                                   std::size_t paths, int base_steps,
                                   std::uint64_t seed, std::size_t impulse_cap,
                                   int threads = 1);

}  // namespace ic
