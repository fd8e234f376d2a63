#include "pb/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <mutex>

#include "pb/rng.hpp"

namespace pb {

namespace {

constexpr double kTimeTol = 1e-12;

std::vector<double> make_grid(const Path& initial, const SimConfig& cfg) {
  const double t = initial.horizon();
  if (t > cfg.horizon + kTimeTol)
    throw std::invalid_argument("simulate: initial horizon exceeds T");
  std::vector<double> grid(initial.times().begin(), initial.times().end());
  if (cfg.horizon - t > kTimeTol) {
    const int k = std::max(1, cfg.steps);
    for (int j = 1; j <= k; ++j)
      grid.push_back(t + (cfg.horizon - t) * static_cast<double>(j) /
                             static_cast<double>(k));
    grid.back() = cfg.horizon;
  }
  return grid;
}

}  // namespace

Policy constant_policy(std::vector<double> u) {
  return [u = std::move(u)](const Path&, double* out) {
    std::copy(u.begin(), u.end(), out);
  };
}

Path PathBatch::extract(std::size_t i) const {
  return Path(dim, times,
              std::vector<double>(path_values(i).begin(), path_values(i).end()),
              PathKind::continuous);
}

void PathBatch::prefix_into(std::size_t i, std::size_t n_samples,
                            Path& ws) const {
  ws.assign(dim, std::span<const double>(times.data(), n_samples),
            path_values(i).subspan(0, n_samples * dim), PathKind::continuous);
}

void simulate_stream(
    const CoefficientSet& coef, const Path& initial, const Policy& policy,
    const SimConfig& cfg,
    const std::function<void(std::size_t, std::span<const double>,
                             std::span<const double>, std::span<const double>)>&
        sink,
    Exec exec) {
  const int n = coef.state_dim;
  const int d = coef.noise_dim;
  if (initial.dim() != n)
    throw std::invalid_argument("simulate: initial path dimension mismatch");
  if (cfg.n_paths < 1 || cfg.steps < 1)
    throw std::invalid_argument("simulate: steps and n_paths must be positive");

  const std::vector<double> grid = make_grid(initial, cfg);
  const std::size_t g = grid.size();
  const std::size_t anchor = initial.samples();
  const std::size_t n_steps = g - 1;

  // anchor samples shared by every path (terminal offset resolved)
  std::vector<double> anchor_vals(anchor * n);
  for (std::size_t k = 0; k < anchor; ++k)
    initial.point(k, anchor_vals.data() + k * n);

  std::string error_msg;
  std::mutex error_mutex;
  std::atomic<bool> failed{false};

  parallel_for(static_cast<std::int64_t>(cfg.n_paths), exec, [&](std::int64_t pi) {
    if (failed.load(std::memory_order_relaxed)) return;
    thread_local Path ws;
    thread_local std::vector<double> vals, incr, b, s, u;
    vals.assign(g * n, 0.0);
    incr.assign(n_steps * d, 0.0);
    b.assign(n, 0.0);
    s.assign(static_cast<std::size_t>(n) * d, 0.0);
    u.assign(std::max(coef.control_dim, 1), 0.0);
    std::memcpy(vals.data(), anchor_vals.data(), sizeof(double) * anchor * n);

    ws.reserve(g);
    ws.assign(n, std::span<const double>(grid.data(), anchor),
              std::span<const double>(vals.data(), anchor * n),
              PathKind::continuous);

    for (std::size_t k = anchor - 1; k + 1 < g; ++k) {
      const double dt = grid[k + 1] - grid[k];
      const double sq = std::sqrt(dt);
      if (coef.control_dim > 0) policy(ws, u.data());
      coef.drift(ws, u.data(), b.data());
      coef.sigma(ws, u.data(), s.data());
      double* x_next = vals.data() + (k + 1) * n;
      const double* x = vals.data() + k * n;
      double* dw = incr.data() + k * d;
      for (int c = 0; c < d; ++c)
        dw[c] = sq * rng::normal(cfg.seed, static_cast<std::uint64_t>(pi), k,
                                 static_cast<std::uint64_t>(c));
      bool finite = true;
      for (int a = 0; a < n; ++a) {
        double v = x[a] + b[a] * dt;
        for (int c = 0; c < d; ++c) v += s[a * d + c] * dw[c];
        x_next[a] = v;
        finite = finite && std::isfinite(v);
      }
      if (!finite) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true))
          error_msg = "simulate: non-finite state at path " +
                      std::to_string(pi) + ", step " + std::to_string(k) +
                      " (" + coef.label + ")";
        return;
      }
      ws.append(grid[k + 1], x_next);
    }
    sink(static_cast<std::size_t>(pi), grid, vals, incr);
  });

  if (failed.load()) throw NumericalError(error_msg);
}

PathBatch simulate_sde(const CoefficientSet& coef, const Path& initial,
                       const Policy& policy, const SimConfig& cfg, Exec exec) {
  PathBatch batch;
  batch.dim = coef.state_dim;
  batch.noise_dim = coef.noise_dim;
  batch.control_dim = coef.control_dim;
  batch.times = make_grid(initial, cfg);
  batch.anchor_samples = initial.samples();
  batch.n_paths = static_cast<std::size_t>(cfg.n_paths);
  const std::size_t g = batch.times.size();
  batch.values.assign(batch.n_paths * g * batch.dim, 0.0);
  batch.increments.assign(batch.n_paths * (g - 1) * batch.noise_dim, 0.0);
  if (coef.control_dim > 0)
    batch.controls.assign(batch.n_paths * (g - 1) * coef.control_dim, 0.0);

  // record controls along the way by wrapping the policy per path
  const bool record_controls = coef.control_dim > 0;
  simulate_stream(
      coef, initial,
      policy, cfg,
      [&](std::size_t i, std::span<const double>, std::span<const double> vals,
          std::span<const double> incr) {
        std::memcpy(batch.values.data() + i * g * batch.dim, vals.data(),
                    sizeof(double) * vals.size());
        std::memcpy(batch.increments.data() + i * (g - 1) * batch.noise_dim,
                    incr.data(), sizeof(double) * incr.size());
      },
      exec);

  if (record_controls) {
    // replay the feedback policy on the stored prefixes
    parallel_for(static_cast<std::int64_t>(batch.n_paths), exec,
                 [&](std::int64_t i) {
                   thread_local Path ws;
                   ws.reserve(g);
                   for (std::size_t k = batch.anchor_samples - 1; k + 1 < g;
                        ++k) {
                     batch.prefix_into(static_cast<std::size_t>(i), k + 1, ws);
                     policy(ws, batch.controls.data() +
                                    (static_cast<std::size_t>(i) * (g - 1) + k) *
                                        coef.control_dim);
                   }
                 });
  }
  return batch;
}

CoefficientSet brownian_coefficients(int dim) {
  CoefficientSet c;
  c.state_dim = dim;
  c.noise_dim = dim;
  c.label = "brownian";
  c.drift = [dim](const Path&, const double*, double* out) {
    std::fill(out, out + dim, 0.0);
  };
  c.sigma = [dim](const Path&, const double*, double* out) {
    std::fill(out, out + dim * dim, 0.0);
    for (int i = 0; i < dim; ++i) out[i * dim + i] = 1.0;
  };
  c.generator = [](const Path&, double, const double*, const double*) {
    return 0.0;
  };
  c.terminal = [](const Path&) { return 0.0; };
  return c;
}

PathBatch brownian_concat(const Path& initial, const SimConfig& cfg, int dim,
                          Exec exec) {
  if (initial.dim() != dim)
    throw std::invalid_argument("brownian_concat: dimension mismatch");
  return simulate_sde(brownian_coefficients(dim), initial, Policy{}, cfg, exec);
}

namespace {

double running_sup_dev(const PathBatch& batch, std::size_t i,
                       const std::vector<double>& anchor_ext,
                       std::size_t upto) {
  const int n = batch.dim;
  auto vals = batch.path_values(i);
  double best = 0.0;
  for (std::size_t k = 0; k <= upto; ++k) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      const double d = vals[k * n + c] - anchor_ext[k * n + c];
      s += d * d;
    }
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

}  // namespace

MomentReport moment_checks(const PathBatch& batch, const Path& reference,
                           double p, double slope_tol) {
  if (p < 2.0) throw std::invalid_argument("moment_checks: p must be >= 2");
  if (batch.n_paths < 100)
    throw std::invalid_argument("moment_checks: batch too small to fit (N < 100)");
  const std::size_t g = batch.n_times();
  const int n = batch.dim;
  const double t = reference.horizon();

  // anchor flat extension sampled on the batch grid
  std::vector<double> anchor_ext(g * n);
  for (std::size_t k = 0; k < g; ++k)
    reference.value_at(std::min(batch.times[k], t), anchor_ext.data() + k * n);

  // ladder of r strictly after the anchor
  std::vector<std::size_t> ladder_idx;
  for (std::size_t k = batch.anchor_samples; k < g; ++k) ladder_idx.push_back(k);
  if (ladder_idx.size() > 8) {
    std::vector<std::size_t> pick;
    for (int j = 0; j < 8; ++j) {
      const double frac = static_cast<double>(j + 1) / 8.0;
      pick.push_back(ladder_idx[static_cast<std::size_t>(
          std::round(frac * (ladder_idx.size() - 1)))]);
    }
    pick.erase(std::unique(pick.begin(), pick.end()), pick.end());
    ladder_idx = pick;
  }

  MomentReport rep;
  rep.p = p;
  rep.expected_slope = p / 2.0;

  std::vector<double> dev_sum(ladder_idx.size(), 0.0);
  double sup_sum = 0.0;
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    auto vals = batch.path_values(i);
    double sup = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) s += vals[k * n + c] * vals[k * n + c];
      sup = std::max(sup, std::sqrt(s));
    }
    sup_sum += std::pow(sup, p);
    for (std::size_t j = 0; j < ladder_idx.size(); ++j)
      dev_sum[j] += std::pow(running_sup_dev(batch, i, anchor_ext, ladder_idx[j]), p);
  }
  rep.supnorm_moment = sup_sum / static_cast<double>(batch.n_paths);
  for (std::size_t j = 0; j < ladder_idx.size(); ++j) {
    rep.ladder_times.push_back(batch.times[ladder_idx[j]]);
    rep.deviation_moments.push_back(dev_sum[j] /
                                    static_cast<double>(batch.n_paths));
  }

  // log-log fit of deviation moments against (r - t)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t j = 0; j < ladder_idx.size(); ++j) {
    if (rep.deviation_moments[j] <= 0.0) continue;
    const double x = std::log(rep.ladder_times[j] - t);
    const double y = std::log(rep.deviation_moments[j]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt >= 2) {
    const double denom = cnt * sxx - sx * sx;
    rep.fitted_slope = (cnt * sxy - sx * sy) / denom;
    rep.fitted_intercept = (sy - rep.fitted_slope * sx) / cnt;
    rep.slope_ok = std::abs(rep.fitted_slope - rep.expected_slope) <= slope_tol;
  }
  return rep;
}

std::vector<double> brownian_moduli(const SimConfig& cfg, double alpha,
                                    Exec exec) {
  std::vector<double> moduli(cfg.n_paths, 0.0);
  const Path start = Path::zero(1, 0.0, 0);
  const double dt = cfg.horizon / static_cast<double>(cfg.steps);
  simulate_stream(
      brownian_coefficients(1), start, Policy{}, cfg,
      [&](std::size_t i, std::span<const double>, std::span<const double> vals,
          std::span<const double>) {
        moduli[i] = holder_modulus_uniform_1d(vals, dt, alpha);
      },
      exec);
  return moduli;
}

namespace {

void wilson_interval(std::size_t hits, std::size_t n, double& lo, double& hi) {
  const double z = 1.959963984540054;  // 95%
  const double nh = static_cast<double>(n);
  const double ph = static_cast<double>(hits) / nh;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nh;
  const double center = ph + z2 / (2.0 * nh);
  const double spread =
      z * std::sqrt(ph * (1.0 - ph) / nh + z2 / (4.0 * nh * nh));
  lo = std::max(0.0, (center - spread) / denom);
  hi = std::min(1.0, (center + spread) / denom);
}

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t k = static_cast<std::size_t>(pos);
  const double w = pos - static_cast<double>(k);
  if (k + 1 >= sorted.size()) return sorted.back();
  return (1.0 - w) * sorted[k] + w * sorted[k + 1];
}

}  // namespace

std::vector<TailPoint> holder_tail_estimate(const SimConfig& cfg, double alpha,
                                            std::vector<double> mus,
                                            Exec exec) {
  if (!(alpha > 0.0) || !(alpha < 0.5))
    throw std::invalid_argument("holder_tail_estimate: alpha must lie in (0, 1/2)");
  std::vector<double> moduli = brownian_moduli(cfg, alpha, exec);
  if (mus.empty()) {
    std::vector<double> sorted = moduli;
    std::sort(sorted.begin(), sorted.end());
    mus = {quantile(sorted, 0.90), quantile(sorted, 0.95),
           quantile(sorted, 0.99), quantile(sorted, 0.999)};
  }
  if (!std::is_sorted(mus.begin(), mus.end()))
    throw std::invalid_argument("holder_tail_estimate: mus must be increasing");

  std::vector<TailPoint> out;
  for (double mu : mus) {
    TailPoint tp;
    tp.mu = mu;
    std::size_t hits = 0;
    for (double m : moduli)
      if (m >= mu) ++hits;
    tp.exceedances = hits;
    tp.p_hat = static_cast<double>(hits) / static_cast<double>(moduli.size());
    wilson_interval(hits, moduli.size(), tp.ci_lo, tp.ci_hi);
    tp.usable = hits >= 50;
    out.push_back(tp);
  }
  return out;
}

double dyadic_tail_bound(double p, double alpha, double total_horizon,
                         double mu, double cp) {
  if (!((0.5 - alpha) * p > 1.0))
    throw std::invalid_argument(
        "dyadic_tail_bound: requires (1/2 - alpha) p > 1");
  if (!(mu > 0.0) || !(total_horizon > 0.0) || !(cp > 0.0))
    throw std::invalid_argument("dyadic_tail_bound: parameters must be positive");
  const double expo = p * (0.5 - alpha) - 1.0;
  const double ratio = std::pow(2.0, -expo);  // in (0,1)
  const double head = 2.0 * std::pow(3.0, p) * cp * total_horizon *
                      std::pow(total_horizon, expo) *
                      std::pow(std::pow(2.0, -alpha) * mu, -p);
  return head / (1.0 - ratio);
}

std::vector<double> combined_exit_time(const PathBatch& batch,
                                       const Path& anchor,
                                       const HolderParams& hp, double kappa) {
  const std::size_t g = batch.n_times();
  const int n = batch.dim;
  const double t = anchor.horizon();
  const double cap = std::min(t + kappa, batch.times.back());

  std::vector<double> anchor_ext(g * n);
  for (std::size_t k = 0; k < g; ++k)
    anchor.value_at(std::min(batch.times[k], t), anchor_ext.data() + k * n);

  std::vector<double> out(batch.n_paths, cap);
  parallel_for(static_cast<std::int64_t>(batch.n_paths), Exec::parallel,
               [&](std::int64_t i) {
    auto vals = batch.path_values(static_cast<std::size_t>(i));
    double exit = cap;
    for (std::size_t j = 1; j < g; ++j) {
      const double tj = batch.times[j];
      if (tj > cap + 1e-12) break;
      // kappa deviation from the anchor extension
      double dev = 0.0;
      for (int c = 0; c < n; ++c) {
        const double d = vals[j * n + c] - anchor_ext[j * n + c];
        dev += d * d;
      }
      bool hit = std::sqrt(dev) > kappa;
      // running modulus violation
      if (!hit) {
        for (std::size_t i2 = 0; i2 < j && !hit; ++i2) {
          double s = 0.0;
          for (int c = 0; c < n; ++c) {
            const double d = vals[j * n + c] - vals[i2 * n + c];
            s += d * d;
          }
          hit = std::sqrt(s) >
                hp.mu * std::pow(tj - batch.times[i2], hp.alpha);
        }
      }
      if (hit) {
        exit = std::min(exit, tj);
        break;
      }
    }
    out[i] = exit;
  });
  return out;
}

BoundaryEscapeResult boundary_escape_experiment(const HolderParams& hp,
                                                double t1, double delta,
                                                const SimConfig& cfg,
                                                int anchor_steps, Exec exec) {
  const double t = cfg.horizon;
  if (!(t1 >= 0.0) || !(t1 < t))
    throw std::invalid_argument("boundary_escape: t1 must lie in [0, t)");
  if (!(delta > 0.0))
    throw std::invalid_argument("boundary_escape: delta must be positive");

  // 1-d path touching the modulus boundary: flat up to t1, then
  // mu (s - t1)^alpha
  const Path anchor = Path::sampled(
      t, static_cast<std::size_t>(anchor_steps), [&](double s) {
        return s <= t1 ? 0.0 : hp.mu * std::pow(s - t1, hp.alpha);
      });

  SimConfig concat_cfg = cfg;
  concat_cfg.horizon = t + delta;

  const double pass_tol = hp.mu * (1.0 + 1e-12);
  std::atomic<std::size_t> remaining{0};
  simulate_stream(
      brownian_coefficients(1), anchor, Policy{}, concat_cfg,
      [&](std::size_t, std::span<const double> times,
          std::span<const double> vals, std::span<const double>) {
        const std::size_t g = times.size();
        // scan new samples against all earlier ones, exit on first violation
        for (std::size_t j = anchor.samples(); j < g; ++j) {
          for (std::size_t i = 0; i < j; ++i) {
            const double q = std::abs(vals[j] - vals[i]) /
                             std::pow(times[j] - times[i], hp.alpha);
            if (q > pass_tol) return;
          }
        }
        remaining.fetch_add(1, std::memory_order_relaxed);
      },
      exec);

  BoundaryEscapeResult res;
  res.n_paths = static_cast<std::size_t>(cfg.n_paths);
  res.delta = delta;
  res.fraction_remaining =
      static_cast<double>(remaining.load()) / static_cast<double>(cfg.n_paths);
  return res;
}

}  // namespace pb
