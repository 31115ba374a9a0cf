#pragma once

// Shipped problem scenarios. Each passes validate_problem; heat-kernel and
// linear-adjoint additionally come with closed-form reference values used by
// the test suite.

#include <string>
#include <vector>

#include "impulse/model.hpp"

namespace ic {

// Known names: heat-kernel, impulse-active, loan, linear-adjoint.
// Throws IcError("unknown preset: ...") otherwise.
ProblemSpec make_preset(const std::string& name);

std::vector<std::string> preset_names();

// Closed-form value for the heat-kernel scenario: 1 + cos(x) e^{-(T-t)/2}.
double heat_kernel_value(double t, double x, double T);

}  // namespace ic
