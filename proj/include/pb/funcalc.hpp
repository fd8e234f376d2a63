#pragma once

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "pb/path.hpp"

namespace pb {

// An evaluatable map from paths to reals, optionally with analytic
// horizontal/vertical derivatives attached.
class PathFunctional {
 public:
  using Eval = std::function<double(const Path&)>;
  using DtFn = std::function<double(const Path&)>;
  using DxFn = std::function<Eigen::VectorXd(const Path&)>;
  using DxxFn = std::function<Eigen::MatrixXd(const Path&)>;

  PathFunctional() = default;
  PathFunctional(std::string label, Eval eval)
      : label_(std::move(label)), eval_(std::move(eval)) {}

  PathFunctional& with_derivatives(DtFn dt, DxFn dx, DxxFn dxx) {
    dt_ = std::move(dt);
    dx_ = std::move(dx);
    dxx_ = std::move(dxx);
    return *this;
  }

  double operator()(const Path& a) const { return eval_(a); }
  const std::string& label() const { return label_; }
  bool has_analytic() const { return static_cast<bool>(dt_); }

  double analytic_dt(const Path& a) const;
  Eigen::VectorXd analytic_dx(const Path& a) const;
  Eigen::MatrixXd analytic_dxx(const Path& a) const;

 private:
  std::string label_;
  Eval eval_;
  DtFn dt_;
  DxFn dx_;
  DxxFn dxx_;
};

struct DerivativeBundle {
  double dt = 0.0;
  Eigen::VectorXd dx;
  Eigen::MatrixXd dxx;
  double bump_h = 0.0;
  double time_h = 0.0;
};

// default vertical bump: 1e-4 * (1 + sup norm of the path)
double default_bump(const Path& a);
// default horizontal step: the path's last grid spacing
double default_time_step(const Path& a);

// central differences on terminal bumps, per coordinate
Eigen::VectorXd vertical_derivative(const PathFunctional& v, const Path& a,
                                    double h);
// second-order central differences on double bumps, symmetrized
Eigen::MatrixXd vertical_hessian(const PathFunctional& v, const Path& a,
                                 double h);
// one-sided (right) difference under flat extension; throws if the
// extension would pass t_max
double horizontal_derivative(const PathFunctional& v, const Path& a, double h,
                             double t_max = std::numeric_limits<double>::infinity());

// all Dupire derivatives at once; h = 0 picks the defaults. Analytic
// derivatives are used when the functional carries them.
DerivativeBundle dupire_bundle(const PathFunctional& v, const Path& a,
                               double bump_h = 0.0, double time_h = 0.0,
                               double t_max = std::numeric_limits<double>::infinity());

// Quadratic-variation convention for the chain-rule residual.
// unit_rate uses the standard-Brownian compensator d<X> = dt * I, so the
// residual of a martingale functional carries the O(sqrt(dt)) statistical
// defect of the realized squared increments. squared_increments uses
// d<X> = dX dX^T, which telescopes exactly for quadratic functionals and
// suits paths with non-unit diffusion.
enum class QuadraticVariation { unit_rate, squared_increments };

// signed defect of the functional chain rule along a sampled path
double ito_residual(const PathFunctional& v, const Path& x,
                    QuadraticVariation qv = QuadraticVariation::unit_rate,
                    double bump_h = 0.0);

// sampled estimate of the 2+beta Holder norm of v (value plus all Dupire
// derivatives): sup of absolute values plus beta-quotients in the parabolic
// metric over all sample pairs. A lower bound of the true norm; usable for
// refutation and bounded-norm evidence only.
double functional_holder_norm(const PathFunctional& v,
                              std::span<const Path> sample, double beta);

// named functionals addressable from the CLI; horizon-dependent entries are
// built for the given total horizon
PathFunctional make_functional(const std::string& label, double total_horizon);
std::vector<std::string> functional_labels();

}  // namespace pb
