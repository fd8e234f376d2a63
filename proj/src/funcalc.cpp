#include "pb/funcalc.hpp"

#include <cmath>
#include <stdexcept>

namespace pb {

double PathFunctional::analytic_dt(const Path& a) const {
  if (!dt_) throw std::logic_error("PathFunctional: no analytic derivatives: " + label_);
  return dt_(a);
}

Eigen::VectorXd PathFunctional::analytic_dx(const Path& a) const {
  if (!dx_) throw std::logic_error("PathFunctional: no analytic derivatives: " + label_);
  return dx_(a);
}

Eigen::MatrixXd PathFunctional::analytic_dxx(const Path& a) const {
  if (!dxx_) throw std::logic_error("PathFunctional: no analytic derivatives: " + label_);
  return dxx_(a);
}

double default_bump(const Path& a) { return 1e-4 * (1.0 + sup_norm(a)); }

double default_time_step(const Path& a) {
  const std::size_t k = a.samples();
  if (k < 2) return 1e-3;
  return a.time(k - 1) - a.time(k - 2);
}

Eigen::VectorXd vertical_derivative(const PathFunctional& v, const Path& a,
                                    double h) {
  if (!(h > 0.0)) throw std::invalid_argument("vertical_derivative: h must be positive");
  const int n = a.dim();
  Eigen::VectorXd out(n);
  std::vector<double> e(n, 0.0);
  for (int i = 0; i < n; ++i) {
    e[i] = h;
    const double up = v(vertical_bump(a, e));
    e[i] = -h;
    const double dn = v(vertical_bump(a, e));
    e[i] = 0.0;
    out[i] = (up - dn) / (2.0 * h);
  }
  return out;
}

Eigen::MatrixXd vertical_hessian(const PathFunctional& v, const Path& a,
                                 double h) {
  if (!(h > 0.0)) throw std::invalid_argument("vertical_hessian: h must be positive");
  const int n = a.dim();
  Eigen::MatrixXd out(n, n);
  const double mid = v(a);
  std::vector<double> e(n, 0.0);
  for (int i = 0; i < n; ++i) {
    e[i] = h;
    const double up = v(vertical_bump(a, e));
    e[i] = -h;
    const double dn = v(vertical_bump(a, e));
    e[i] = 0.0;
    out(i, i) = (up - 2.0 * mid + dn) / (h * h);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (int si = -1; si <= 1; si += 2) {
        for (int sj = -1; sj <= 1; sj += 2) {
          e[i] = si * h;
          e[j] = sj * h;
          acc += si * sj * v(vertical_bump(a, e));
        }
      }
      e[i] = e[j] = 0.0;
      out(i, j) = out(j, i) = acc / (4.0 * h * h);
    }
  }
  return 0.5 * (out + out.transpose());
}

double horizontal_derivative(const PathFunctional& v, const Path& a, double h,
                             double t_max) {
  if (!(h > 0.0)) throw std::invalid_argument("horizontal_derivative: h must be positive");
  if (a.horizon() + h > t_max + 1e-12)
    throw std::invalid_argument("horizontal_derivative: extension past the total horizon");
  return (v(flat_extend(a, a.horizon() + h)) - v(a)) / h;
}

DerivativeBundle dupire_bundle(const PathFunctional& v, const Path& a,
                               double bump_h, double time_h, double t_max) {
  DerivativeBundle b;
  b.bump_h = bump_h > 0.0 ? bump_h : default_bump(a);
  b.time_h = time_h > 0.0 ? time_h : default_time_step(a);
  if (v.has_analytic()) {
    b.dt = v.analytic_dt(a);
    b.dx = v.analytic_dx(a);
    b.dxx = v.analytic_dxx(a);
    return b;
  }
  b.dt = horizontal_derivative(v, a, b.time_h, t_max);
  b.dx = vertical_derivative(v, a, b.bump_h);
  b.dxx = vertical_hessian(v, a, b.bump_h);
  return b;
}

double ito_residual(const PathFunctional& v, const Path& x,
                    QuadraticVariation qv, double bump_h) {
  const std::size_t k = x.samples();
  const int n = x.dim();
  if (k < 2) return 0.0;

  Path prefix;
  prefix.reserve(k);
  prefix.assign(n, x.times().subspan(0, 1), x.raw_values().subspan(0, n),
                x.kind());
  const double v0 = v(prefix);

  double sum = 0.0;
  std::vector<double> cur(n), nxt(n);
  for (std::size_t s = 0; s + 1 < k; ++s) {
    const double dt = x.time(s + 1) - x.time(s);
    x.point(s, cur.data());
    x.point(s + 1, nxt.data());
    DerivativeBundle d =
        dupire_bundle(v, prefix, bump_h, dt, x.time(s) + 2.0 * dt);
    sum += d.dt * dt;
    for (int c = 0; c < n; ++c) sum += d.dx[c] * (nxt[c] - cur[c]);
    if (qv == QuadraticVariation::squared_increments) {
      for (int ci = 0; ci < n; ++ci)
        for (int cj = 0; cj < n; ++cj)
          sum +=
              0.5 * d.dxx(ci, cj) * (nxt[ci] - cur[ci]) * (nxt[cj] - cur[cj]);
    } else {
      for (int c = 0; c < n; ++c) sum += 0.5 * d.dxx(c, c) * dt;
    }
    prefix.append(x.time(s + 1), nxt.data());
  }
  return v(x) - v0 - sum;
}

namespace {

struct ScalarTrack {
  double sup_abs = 0.0;
  double quot = 0.0;
};

void track(ScalarTrack& t, std::span<const double> vals,
           const std::vector<std::vector<double>>& dists, double beta) {
  for (std::size_t i = 0; i < vals.size(); ++i) {
    t.sup_abs = std::max(t.sup_abs, std::abs(vals[i]));
    for (std::size_t j = i + 1; j < vals.size(); ++j) {
      const double d = dists[i][j];
      if (d <= 0.0) continue;
      t.quot = std::max(t.quot,
                        std::abs(vals[i] - vals[j]) / std::pow(d, beta));
    }
  }
}

}  // namespace

double functional_holder_norm(const PathFunctional& v,
                              std::span<const Path> sample, double beta) {
  if (sample.empty())
    throw std::invalid_argument("functional_holder_norm: empty sample");
  if (!(beta > 0.0) || !(beta < 1.0))
    throw std::invalid_argument("functional_holder_norm: beta must lie in (0,1)");
  const std::size_t m = sample.size();
  const int n = sample[0].dim();

  std::vector<std::vector<double>> dists(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      dists[i][j] = dp_metric(sample[i], sample[j]);

  std::vector<double> vals(m), dts(m);
  std::vector<Eigen::VectorXd> dxs(m);
  std::vector<Eigen::MatrixXd> dxxs(m);
  for (std::size_t i = 0; i < m; ++i) {
    vals[i] = v(sample[i]);
    DerivativeBundle b = dupire_bundle(v, sample[i]);
    dts[i] = b.dt;
    dxs[i] = b.dx;
    dxxs[i] = b.dxx;
  }

  double total = 0.0;
  {
    ScalarTrack t;
    track(t, vals, dists, beta);
    total += t.sup_abs + t.quot;
  }
  {
    ScalarTrack t;
    track(t, dts, dists, beta);
    total += t.sup_abs + t.quot;
  }
  std::vector<double> comp(m);
  for (int c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < m; ++i) comp[i] = dxs[i][c];
    ScalarTrack t;
    track(t, comp, dists, beta);
    total += t.sup_abs + t.quot;
  }
  for (int ci = 0; ci < n; ++ci) {
    for (int cj = ci; cj < n; ++cj) {
      for (std::size_t i = 0; i < m; ++i) comp[i] = dxxs[i](ci, cj);
      ScalarTrack t;
      track(t, comp, dists, beta);
      total += t.sup_abs + t.quot;
    }
  }
  return total;
}

namespace {

// trapezoidal rule on the recorded samples of the first coordinate; a
// terminal override carries no quadrature weight
double trapezoid_first(const Path& a) {
  double acc = 0.0;
  const int n = a.dim();
  for (std::size_t k = 0; k + 1 < a.samples(); ++k) {
    const double dt = a.time(k + 1) - a.time(k);
    acc += 0.5 * dt * (a.sample(k)[0] + a.sample(k + 1)[0]);
  }
  (void)n;
  return acc;
}

}  // namespace

PathFunctional make_functional(const std::string& label, double total_horizon) {
  const double T = total_horizon;
  if (label == "terminal_square") {
    PathFunctional f(label, [](const Path& a) {
      return a.terminal().squaredNorm();
    });
    f.with_derivatives(
        [](const Path&) { return 0.0; },
        [](const Path& a) { return Eigen::VectorXd(2.0 * a.terminal()); },
        [](const Path& a) {
          return Eigen::MatrixXd(2.0 *
                                 Eigen::MatrixXd::Identity(a.dim(), a.dim()));
        });
    return f;
  }
  if (label == "terminal_value") {
    PathFunctional f(label, [](const Path& a) { return a.terminal()[0]; });
    f.with_derivatives(
        [](const Path&) { return 0.0; },
        [](const Path& a) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(a.dim());
          e[0] = 1.0;
          return e;
        },
        [](const Path& a) {
          return Eigen::MatrixXd(Eigen::MatrixXd::Zero(a.dim(), a.dim()));
        });
    return f;
  }
  if (label == "running_integral") {
    PathFunctional f(label, [](const Path& a) { return trapezoid_first(a); });
    f.with_derivatives(
        [](const Path& a) { return a.terminal()[0]; },
        [](const Path& a) {
          return Eigen::VectorXd(Eigen::VectorXd::Zero(a.dim()));
        },
        [](const Path& a) {
          return Eigen::MatrixXd(Eigen::MatrixXd::Zero(a.dim(), a.dim()));
        });
    return f;
  }
  if (label == "running_max") {
    // evaluated but never differentiated
    return PathFunctional(label, [](const Path& a) { return sup_norm(a); });
  }
  if (label == "heat_solution" || label == "cylinder:heat") {
    PathFunctional f(label, [T](const Path& a) {
      return a.terminal().squaredNorm() + (T - a.horizon());
    });
    f.with_derivatives(
        [](const Path&) { return -1.0; },
        [](const Path& a) { return Eigen::VectorXd(2.0 * a.terminal()); },
        [](const Path& a) {
          return Eigen::MatrixXd(2.0 *
                                 Eigen::MatrixXd::Identity(a.dim(), a.dim()));
        });
    return f;
  }
  if (label == "drift_solution" || label == "cylinder:drift") {
    PathFunctional f(label, [T](const Path& a) {
      return a.terminal()[0] + (T - a.horizon());
    });
    f.with_derivatives(
        [](const Path&) { return -1.0; },
        [](const Path& a) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(a.dim());
          e[0] = 1.0;
          return e;
        },
        [](const Path& a) {
          return Eigen::MatrixXd(Eigen::MatrixXd::Zero(a.dim(), a.dim()));
        });
    return f;
  }
  if (label == "asian_solution" || label == "cylinder:asian") {
    PathFunctional f(label, [T](const Path& a) {
      return trapezoid_first(a) + a.terminal()[0] * (T - a.horizon());
    });
    f.with_derivatives(
        [](const Path&) { return 0.0; },
        [T](const Path& a) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(a.dim());
          e[0] = T - a.horizon();
          return e;
        },
        [](const Path& a) {
          return Eigen::MatrixXd(Eigen::MatrixXd::Zero(a.dim(), a.dim()));
        });
    return f;
  }
  throw std::invalid_argument("make_functional: unknown label " + label);
}

std::vector<std::string> functional_labels() {
  return {"terminal_square", "terminal_value", "running_integral",
          "running_max",     "heat_solution",  "drift_solution",
          "asian_solution"};
}

}  // namespace pb
