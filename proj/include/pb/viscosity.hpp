#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pb/backward.hpp"
#include "pb/funcalc.hpp"

namespace pb {

// localization parameters for jet diagnostics
struct JetParams {
  HolderParams hp;   // alpha in (0, 1/2) for the jet theory
  double kappa = 0.25;  // jet radius / time depth
  double m0 = 10.0;     // sup-norm box radius
  double beta = 0.5;    // functional Holder exponent in (0, 1)
  double total_horizon = 1.0;
  JetParams(HolderParams h, double k, double m, double b, double t_total);
};

// a smooth test functional; analytic derivatives are required
struct SmoothCandidate {
  PathFunctional psi;
  explicit SmoothCandidate(PathFunctional f);
};

// 1/2 Tr(sigma sigma^T A) + <b, p> + f(path, r, sigma^T p, u)
double hamiltonian(const CoefficientSet& coef, const Path& a, double r,
                   const Eigen::VectorXd& p, const Eigen::MatrixXd& big_a,
                   std::span<const double> u);

double sup_hamiltonian(const CoefficientSet& coef, const Path& a, double r,
                       const Eigen::VectorXd& p, const Eigen::MatrixXd& big_a,
                       const std::vector<std::vector<double>>& control_grid);

// D_t psi + hamiltonian(path, psi, D_x psi, D_xx psi, u)
double l_operator(const SmoothCandidate& psi, const Path& a,
                  std::span<const double> u, const CoefficientSet& coef);

// -D_t v - sup_u H(...); zero for classical solutions
double ppde_residual(const SmoothCandidate& v, const Path& a,
                     const std::vector<std::vector<double>>& control_grid,
                     const CoefficientSet& coef);

enum class JetVerdict { super, sub, both, neither };

struct JetEvidence {
  JetVerdict verdict = JetVerdict::neither;
  std::size_t sample_size = 0;   // paths surviving the cylinder/ball filter
  double min_gap = 0.0;          // min over the sample of psi - v (shifted)
  double max_gap = 0.0;
  double holder_norm = 0.0;      // sampled |psi|_{2,beta} estimate
  bool norm_ok = false;          // holder_norm <= 1/kappa
  std::optional<std::size_t> witness;  // index refuting the touching side
  double tol = 0.0;
  std::string note;
};

// sampled membership test: psi is shifted so psi(a) = v(a); verdicts are
// refutation-complete and confirmation-heuristic
JetEvidence jet_membership(const SmoothCandidate& psi, const PathFunctional& v,
                           const Path& a, const JetParams& jp,
                           std::span<const Path> sample);

// sup over the supplied jets of -D_t psi - sup_u H at their base paths;
// empty list returns the -infinity sentinel
double subsolution_diagnostic(
    const PathFunctional& v,
    std::span<const std::pair<Path, SmoothCandidate>> jets,
    const std::vector<std::vector<double>>& control_grid,
    const CoefficientSet& coef);

struct VerificationReport {
  std::vector<std::pair<std::string, double>> gaps;  // label -> v - J(u)
  double optimal_gap = 0.0;  // v - J under the candidate policy
  double eps_num = 0.0;
  bool ok = false;  // every gap >= -eps_num
};

// checks v >= J for the sampled constant controls and v ~ J under the
// candidate policy
VerificationReport verification_demo(const SmoothCandidate& v,
                                     const CoefficientSet& coef,
                                     const Policy& candidate, const Path& start,
                                     const SimConfig& cfg,
                                     const CondExpEngine& engine);

}  // namespace pb
