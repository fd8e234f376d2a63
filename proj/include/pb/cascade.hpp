#pragma once

#include <span>
#include <vector>

#include "pb/dynamics.hpp"

namespace pb {

// Tensor grid and scheme parameters for the segment PDEs. One shared node
// axis serves every coordinate, so chained terminal conditions line up on
// grid nodes exactly.
struct GridSpec {
  double total_horizon = 1.0;
  double half_width = 0.0;  // 0 resolves to 5 * (1 + sup-norm of start) * sqrt(T)
  int nodes_per_axis = 61;  // odd so the axis contains 0 exactly
  int substeps = 0;         // time substeps per segment; 0 resolves from CFL
  double cfl_safety = 0.9;
  std::vector<std::vector<double>> controls;  // finite control grid
  double sigma_max = 1.0;  // declared coefficient bounds for the CFL check
  double drift_max = 1.0;

  // construction-time CFL feasibility with the declared bounds
  void validate(int state_dim) const;
  double dx() const {
    return 2.0 * half_width / static_cast<double>(nodes_per_axis - 1);
  }
  int resolved_substeps(int state_dim, int m) const;
};

// Coefficients of the segment PDEs: the original path functionals evaluated
// on the stepped path rebuilt from increments. A context object carries the
// per-thread workspace.
class LiftedCoefficients {
 public:
  LiftedCoefficients(CoefficientSet coef, int m, double total_horizon);

  int m() const { return m_; }
  double total_horizon() const { return total_; }
  int state_dim() const { return coef_.state_dim; }
  int noise_dim() const { return coef_.noise_dim; }
  const CoefficientSet& base() const { return coef_; }

  struct Ctx {
    Path path;
    std::vector<double> cum;
  };

  // stepped path for segment i at time t from increments xvec (i * n values)
  void build_path(Ctx& ctx, int segment, double t, const double* xvec) const;

  void drift(Ctx& ctx, int segment, double t, const double* xvec,
             const double* u, double* out) const;
  void sigma(Ctx& ctx, int segment, double t, const double* xvec,
             const double* u, double* out) const;
  double generator(Ctx& ctx, int segment, double t, const double* xvec,
                   double y, const double* z, const double* u) const;
  double terminal(Ctx& ctx, const double* xvec_m) const;  // on R^{m x n}

  double segment_start(int segment) const;
  double segment_end(int segment) const;

 private:
  CoefficientSet coef_;
  int m_ = 1;
  double total_ = 1.0;
};

LiftedCoefficients lift_coefficients(const CoefficientSet& coef, int m,
                                     double total_horizon);

// Grid functions of the chained segment solves, all time levels retained.
struct CascadeSolution {
  int m = 1;
  int n = 1;
  double total_horizon = 1.0;
  GridSpec grid;  // resolved
  std::vector<double> axis;
  struct Segment {
    int blocks = 1;                // segment index i (increment blocks)
    std::vector<double> levels;    // ascending time levels on [t_{i-1}, t_i]
    std::vector<double> v;         // levels x nodes
    std::size_t nodes = 0;
  };
  std::vector<Segment> segments;
};

// explicit monotone finite-difference solve, segment m down to 1, with
// chained terminal conditions and linear-extrapolation box boundaries
CascadeSolution solve_cascade(const LiftedCoefficients& lifted,
                              const GridSpec& grid, Exec exec = Exec::parallel);

struct CascadeEval {
  double value = 0.0;
  bool extrapolated = false;  // some increment left the spatial box
};

// multilinear interpolation of the segment grid function at the increment
// coordinates of the path
CascadeEval eval_vm(const CascadeSolution& sol, const Path& a);

// lift, solve, evaluate: the computable approximation of the value
double value_functional(const CoefficientSet& coef, const Path& a, int m,
                        GridSpec grid, Exec exec = Exec::parallel);

struct ConvergenceRow {
  int m = 0;
  double vm = 0.0;
  double diff_prev = 0.0;  // |v^m - v^{previous m}|, 0 for the first row
  double seconds = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  bool capped = false;  // hit the i*n <= 3 dimension cap before the list ended
  std::string note;
};

ConvergenceTable convergence_study(const CoefficientSet& coef, const Path& a,
                                   std::span<const int> ms, GridSpec grid);

struct V0Result {
  double value = 0.0;
  double se = 0.0;
  std::size_t n_paths = 0;
};

// Monte Carlo estimate of the expected running sup-norm of the Brownian
// continuation. In one dimension the within-step suprema are sampled from
// the Brownian-bridge maximum, which removes the grid bias of a plain
// discrete maximum.
V0Result auxiliary_v0(const Path& a, const SimConfig& cfg,
                      Exec exec = Exec::parallel);

}  // namespace pb
