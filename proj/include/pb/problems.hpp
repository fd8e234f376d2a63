#pragma once

#include <string>

#include "pb/config.hpp"
#include "pb/dynamics.hpp"

namespace pb {

// a registry problem: control data plus the grid/horizon defaults that make
// its benchmarks reproducible from the CLI
struct Problem {
  CoefficientSet coef;
  double total_horizon = 1.0;
  std::string description;
};

// named problems: heat | asian | controlled_drift | delay_demo | custom.
// Custom problems compose affine drifts, constant/affine diagonal
// diffusions, drivers affine in (y, z1), and terminal functionals from the
// named registry; no embedded code.
Problem make_problem(const Config& cfg);

std::vector<std::string> problem_names();

}  // namespace pb
