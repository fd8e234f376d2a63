#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pb/path.hpp"

namespace pb {

// thrown when a simulation or solver produces unusable numbers
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Control problem data (b, sigma, f, g) as control-indexed path functionals.
// Coefficients take the path-so-far and write through raw pointers so the
// simulation loops stay allocation-free; all functionals must be pure and
// safe to share read-only across workers.
struct CoefficientSet {
  int state_dim = 1;
  int noise_dim = 1;
  int control_dim = 0;

  // out has size state_dim
  std::function<void(const Path&, const double* u, double* out)> drift;
  // out has size state_dim x noise_dim, row-major
  std::function<void(const Path&, const double* u, double* out)> sigma;
  // driver f(path, y, z, u); z has size noise_dim
  std::function<double(const Path&, double y, const double* z, const double* u)>
      generator;
  // terminal payoff on horizon-T paths
  std::function<double(const Path&)> terminal;

  std::string label;
  double f_lipschitz = 1.0;  // driver Lipschitz bound used for tolerances
  std::vector<std::vector<double>> control_grid;  // finite control set
  std::string control_range;
};

// feedback control evaluated on the path-so-far; open-loop controls ignore
// the path argument
using Policy = std::function<void(const Path&, double* u_out)>;

Policy constant_policy(std::vector<double> u);

struct SimConfig {
  double horizon = 1.0;       // T
  int steps = 256;            // Euler steps on [t, T]
  int n_paths = 1000;         // batch size
  std::uint64_t seed = 1;
  enum class Scheme { euler } scheme = Scheme::euler;
};

// A batch of N simulated paths on a shared grid, with the driving Brownian
// increments retained per path. Values are path-major.
struct PathBatch {
  int dim = 1;
  int noise_dim = 1;
  int control_dim = 0;
  std::vector<double> times;       // G+1 grid times
  std::size_t anchor_samples = 1;  // grid prefix covered by the initial path
  std::size_t n_paths = 0;
  std::vector<double> values;      // N x (G+1) x dim
  std::vector<double> increments;  // N x G x noise_dim (zero on the anchor)
  std::vector<double> controls;    // N x G x control_dim (empty if no control)

  std::size_t n_times() const { return times.size(); }
  std::span<const double> path_values(std::size_t i) const {
    return {values.data() + i * n_times() * dim, n_times() * dim};
  }
  std::span<const double> path_increments(std::size_t i) const {
    return {increments.data() + i * (n_times() - 1) * noise_dim,
            (n_times() - 1) * noise_dim};
  }
  const double* control_at(std::size_t i, std::size_t k) const {
    return controls.data() + (i * (n_times() - 1) + k) * control_dim;
  }
  // copy path i out as a Path
  Path extract(std::size_t i) const;
  // assign the first `n_samples` grid samples of path i into a workspace
  void prefix_into(std::size_t i, std::size_t n_samples, Path& ws) const;
};

// Euler-Maruyama batch agreeing with `initial` on [0, t]; coefficients are
// evaluated on the path-so-far. Throws NumericalError on non-finite output.
PathBatch simulate_sde(const CoefficientSet& coef, const Path& initial,
                       const Policy& policy, const SimConfig& cfg,
                       Exec exec = Exec::parallel);

// streaming variant: per-path callback sink(i, times, values, increments),
// nothing is materialized. The callback must be thread-safe.
void simulate_stream(
    const CoefficientSet& coef, const Path& initial, const Policy& policy,
    const SimConfig& cfg,
    const std::function<void(std::size_t, std::span<const double>,
                             std::span<const double>, std::span<const double>)>&
        sink,
    Exec exec = Exec::parallel);

// Brownian continuation re-anchored at the terminal value of `initial`
PathBatch brownian_concat(const Path& initial, const SimConfig& cfg,
                          int dim = 1, Exec exec = Exec::parallel);

CoefficientSet brownian_coefficients(int dim);

struct MomentReport {
  double p = 2.0;
  double supnorm_moment = 0.0;             // E ||X_T||_0^p
  std::vector<double> ladder_times;        // r values
  std::vector<double> deviation_moments;   // E ||X_r - gamma_{t,r}||_0^p
  double fitted_slope = 0.0;               // log-log slope in (r - t)
  double fitted_intercept = 0.0;
  double expected_slope = 0.0;             // p/2
  bool slope_ok = false;                   // within +-0.2 of p/2
};

// moment statistics of a batch against its anchor path
MomentReport moment_checks(const PathBatch& batch, const Path& reference,
                           double p, double slope_tol = 0.2);

struct TailPoint {
  double mu = 0.0;
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t exceedances = 0;
  bool usable = false;  // at least 50 exceedances
};

// empirical survival probabilities of the Holder modulus of standard
// Brownian paths, with Wilson score intervals. Empty `mus` picks the
// 90/95/99/99.9 percent empirical quantiles.
std::vector<TailPoint> holder_tail_estimate(const SimConfig& cfg, double alpha,
                                            std::vector<double> mus,
                                            Exec exec = Exec::parallel);

// per-path Holder moduli of a standard Brownian batch (shared with the
// tail estimate; exposed for tests)
std::vector<double> brownian_moduli(const SimConfig& cfg, double alpha,
                                    Exec exec = Exec::parallel);

// closed form of the dyadic chaining bound
//   sum_q 2*3^p*Cp*T*(2^-q T)^{p(1/2-a)-1} * (2^-a mu)^-p
double dyadic_tail_bound(double p, double alpha, double total_horizon,
                         double mu, double cp);

// per-path minimum of: first modulus violation, first kappa-deviation from
// the anchor's flat extension, and t + kappa
std::vector<double> combined_exit_time(const PathBatch& batch,
                                       const Path& anchor,
                                       const HolderParams& hp, double kappa);

struct BoundaryEscapeResult {
  double fraction_remaining = 0.0;
  std::size_t n_paths = 0;
  double delta = 0.0;
};

// Brownian continuation of the path sitting on the Holder-ball boundary
// (1-d, gamma(t) - gamma(t1) = mu |t - t1|^alpha); returns the fraction of
// paths whose modulus stays within mu after delta more time
BoundaryEscapeResult boundary_escape_experiment(const HolderParams& hp,
                                                double t1, double delta,
                                                const SimConfig& cfg,
                                                int anchor_steps = 512,
                                                Exec exec = Exec::parallel);

}  // namespace pb
