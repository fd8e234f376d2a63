#include "pb/viscosity.hpp"

#include <cmath>
#include <limits>

namespace pb {

JetParams::JetParams(HolderParams h, double k, double m, double b,
                     double t_total)
    : hp(h), kappa(k), m0(m), beta(b), total_horizon(t_total) {
  if (!(hp.alpha > 0.0) || !(hp.alpha < 0.5))
    throw std::invalid_argument("JetParams: alpha must lie in (0, 1/2)");
  if (!(kappa > 0.0) || !(kappa < t_total))
    throw std::invalid_argument("JetParams: kappa must lie in (0, T)");
  if (!(m0 > 0.0)) throw std::invalid_argument("JetParams: M0 must be positive");
  if (!(beta > 0.0) || !(beta < 1.0))
    throw std::invalid_argument("JetParams: beta must lie in (0, 1)");
}

SmoothCandidate::SmoothCandidate(PathFunctional f) : psi(std::move(f)) {
  if (!psi.has_analytic())
    throw std::invalid_argument(
        "SmoothCandidate: analytic derivatives are required");
}

double hamiltonian(const CoefficientSet& coef, const Path& a, double r,
                   const Eigen::VectorXd& p, const Eigen::MatrixXd& big_a,
                   std::span<const double> u) {
  const int n = coef.state_dim;
  const int d = coef.noise_dim;
  if (p.size() != n || big_a.rows() != n || big_a.cols() != n)
    throw std::invalid_argument("hamiltonian: shape mismatch");
  static constexpr double kZeroU[4] = {0.0, 0.0, 0.0, 0.0};
  const double* uptr = u.empty() ? kZeroU : u.data();

  Eigen::VectorXd b(n);
  Eigen::MatrixXd s(n, d);
  coef.drift(a, uptr, b.data());
  {
    std::vector<double> sbuf(static_cast<std::size_t>(n) * d);
    coef.sigma(a, uptr, sbuf.data());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) s(i, j) = sbuf[i * d + j];
  }
  const Eigen::MatrixXd diffusion = s * s.transpose();
  const Eigen::VectorXd z = s.transpose() * p;
  const double f = coef.generator(a, r, z.data(), uptr);
  return 0.5 * (diffusion * big_a).trace() + b.dot(p) + f;
}

double sup_hamiltonian(const CoefficientSet& coef, const Path& a, double r,
                       const Eigen::VectorXd& p, const Eigen::MatrixXd& big_a,
                       const std::vector<std::vector<double>>& control_grid) {
  if (control_grid.empty())
    throw std::invalid_argument("sup_hamiltonian: empty control grid");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& u : control_grid)
    best = std::max(best, hamiltonian(coef, a, r, p, big_a, u));
  return best;
}

double l_operator(const SmoothCandidate& psi, const Path& a,
                  std::span<const double> u, const CoefficientSet& coef) {
  const double value = psi.psi(a);
  return psi.psi.analytic_dt(a) +
         hamiltonian(coef, a, value, psi.psi.analytic_dx(a),
                     psi.psi.analytic_dxx(a), u);
}

double ppde_residual(const SmoothCandidate& v, const Path& a,
                     const std::vector<std::vector<double>>& control_grid,
                     const CoefficientSet& coef) {
  const double value = v.psi(a);
  return -v.psi.analytic_dt(a) -
         sup_hamiltonian(coef, a, value, v.psi.analytic_dx(a),
                         v.psi.analytic_dxx(a), control_grid);
}

JetEvidence jet_membership(const SmoothCandidate& psi, const PathFunctional& v,
                           const Path& a, const JetParams& jp,
                           std::span<const Path> sample) {
  JetEvidence ev;
  const double va = v(a);
  const double shift = va - psi.psi(a);  // normalize psi(a) = v(a)
  ev.tol = 1e-8 * (1.0 + std::abs(va));

  const CylinderSpec cyl(a, jp.kappa, jp.kappa, jp.total_horizon);
  std::vector<Path> filtered;
  for (const Path& q : sample) {
    if (!in_cylinder(q, cyl)) continue;
    if (!in_holder_ball(q, jp.hp)) continue;
    filtered.push_back(q);
  }
  if (filtered.empty())
    throw std::invalid_argument("jet_membership: empty filtered sample");
  ev.sample_size = filtered.size();

  double min_gap = std::numeric_limits<double>::infinity();
  double max_gap = -std::numeric_limits<double>::infinity();
  std::size_t arg_min = 0, arg_max = 0;
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    const double gap = psi.psi(filtered[i]) + shift - v(filtered[i]);
    if (gap < min_gap) {
      min_gap = gap;
      arg_min = i;
    }
    if (gap > max_gap) {
      max_gap = gap;
      arg_max = i;
    }
  }
  ev.min_gap = min_gap;
  ev.max_gap = max_gap;

  PathFunctional shifted(psi.psi.label() + "+shift",
                         [&psi, shift](const Path& q) {
                           return psi.psi(q) + shift;
                         });
  shifted.with_derivatives(
      [&psi](const Path& q) { return psi.psi.analytic_dt(q); },
      [&psi](const Path& q) { return psi.psi.analytic_dx(q); },
      [&psi](const Path& q) { return psi.psi.analytic_dxx(q); });
  ev.holder_norm = functional_holder_norm(shifted, filtered, jp.beta);
  ev.norm_ok = ev.holder_norm <= 1.0 / jp.kappa;

  const bool touches_above = min_gap >= -ev.tol;  // psi - v >= 0 on the sample
  const bool touches_below = max_gap <= ev.tol;   // psi - v <= 0 on the sample
  if (!ev.norm_ok) {
    ev.verdict = JetVerdict::neither;
    ev.note = "sampled 2+beta norm exceeds 1/kappa";
    return ev;
  }
  if (touches_above && touches_below) {
    ev.verdict = JetVerdict::both;
  } else if (touches_above) {
    ev.verdict = JetVerdict::super;
    ev.witness = arg_min;  // closest approach to the touching bound
  } else if (touches_below) {
    ev.verdict = JetVerdict::sub;
    ev.witness = arg_max;
  } else {
    ev.verdict = JetVerdict::neither;
    ev.witness = min_gap < -ev.tol ? arg_min : arg_max;
    ev.note = "sign change across the sample refutes both jets";
  }
  return ev;
}

double subsolution_diagnostic(
    const PathFunctional& v,
    std::span<const std::pair<Path, SmoothCandidate>> jets,
    const std::vector<std::vector<double>>& control_grid,
    const CoefficientSet& coef) {
  if (jets.empty()) return -std::numeric_limits<double>::infinity();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [base, psi] : jets) {
    (void)v;
    best = std::max(best, ppde_residual(psi, base, control_grid, coef));
  }
  return best;
}

VerificationReport verification_demo(const SmoothCandidate& v,
                                     const CoefficientSet& coef,
                                     const Policy& candidate, const Path& start,
                                     const SimConfig& cfg,
                                     const CondExpEngine& engine) {
  VerificationReport rep;
  const double value = v.psi(start);
  double eps = 0.0;

  for (const auto& u : coef.control_grid) {
    const double j =
        cost_functional(coef, start, constant_policy(u), cfg, engine);
    std::string label = "u=";
    for (std::size_t c = 0; c < u.size(); ++c)
      label += (c ? "," : "") + std::to_string(u[c]);
    rep.gaps.emplace_back(label, value - j);
    eps = std::max(eps, 3.0 / std::sqrt(static_cast<double>(cfg.n_paths)));
  }
  const double j_star = cost_functional(coef, start, candidate, cfg, engine);
  rep.optimal_gap = value - j_star;
  rep.eps_num = std::max(eps, 0.05);
  rep.ok = true;
  for (const auto& [label, gap] : rep.gaps)
    if (gap < -rep.eps_num) rep.ok = false;
  if (std::abs(rep.optimal_gap) > rep.eps_num) rep.ok = false;
  return rep;
}

}  // namespace pb
