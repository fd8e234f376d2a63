#pragma once

#include <span>
#include <vector>

#include "pb/dynamics.hpp"

namespace pb {

// Conditional-expectation engine for the backward induction.
// regression: least-squares on path features (terminal value, running
// integral, running max, and their degree-2 monomials), solved by a
// thresholded eigendecomposition (min-norm when collinear).
// tree: exact backward induction on a non-recombining +-sqrt(dt) lattice;
// meant for low-depth 1-d problems where it serves as an oracle.
struct CondExpEngine {
  enum class Kind { regression, tree };
  Kind kind = Kind::regression;
  bool strict_rank = false;  // throw on rank-deficient regression designs
  int fixed_point_iters = 3;
  int tree_depth = 10;
  double svd_rtol = 1e-10;
};

struct BsdeSolution {
  std::vector<double> times;   // grid from the batch anchor to T
  std::size_t n_paths = 0;
  int zdim = 1;
  // time-major: y[k * n_paths + i], z[(k * n_paths + i) * zdim + c]
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> cond_numbers;  // regression condition number per step
  double y0_mean = 0.0;
  double y0_se = 0.0;   // standard error of the start-time regression target
  double eps_num = 0.0; // 3 * y0_se + f_lipschitz * dt

  double y_at(std::size_t k, std::size_t i) const { return y[k * n_paths + i]; }
};

// backward induction over the batch sub-grid [t, T] with the supplied
// per-path terminal values; regression engine only
BsdeSolution solve_bsde(const CoefficientSet& coef, const PathBatch& batch,
                        const CondExpEngine& engine,
                        std::span<const double> terminal_values);

// backward semigroup: solve restricted to [t, tau] per path with terminal
// eta at the (grid-aligned) stop time; paths are frozen after their stop
BsdeSolution backward_semigroup(const CoefficientSet& coef,
                                const PathBatch& batch,
                                std::span<const double> stop_times,
                                std::span<const double> eta,
                                const CondExpEngine& engine);

// exact backward induction on the binary lattice grown from `initial`;
// 1-d state and noise, constant control (empty for uncontrolled)
double solve_bsde_tree(const CoefficientSet& coef, const Path& initial,
                       double total_horizon, std::span<const double> control,
                       const CondExpEngine& engine);

// simulate forward, solve backward, return the value at the start
double cost_functional(const CoefficientSet& coef, const Path& initial,
                       const Policy& policy, const SimConfig& cfg,
                       const CondExpEngine& engine);

struct ComparisonResult {
  bool ok = false;
  double margin = 0.0;   // Y1(0) - Y2(0)
  double eps_num = 0.0;
  double y1 = 0.0, y2 = 0.0;
};

// monotonicity check for a BSDE pair sharing dynamics: requires xi1 >= xi2
// pathwise and f1 >= f2 on sampled arguments (refuses otherwise), then
// verifies Y1(0) >= Y2(0) - eps_num on a shared batch or lattice
ComparisonResult comparison_check(const CoefficientSet& a,
                                  const CoefficientSet& b, const Path& initial,
                                  const SimConfig& cfg,
                                  const CondExpEngine& engine);

struct DppResult {
  double value = 0.0;            // value_engine at the initial path
  double best = 0.0;             // max over controls of the semigroup value
  double discrepancy = 0.0;      // |value - best|
  std::vector<double> per_control;
};

// one-step dynamic-programming residual with controls held constant on
// [t, t + delta]
DppResult dpp_check(const std::function<double(const Path&)>& value_engine,
                    const CoefficientSet& coef, const Path& initial,
                    double delta,
                    const std::vector<std::vector<double>>& control_grid,
                    const SimConfig& cfg, const CondExpEngine& engine);

}  // namespace pb
