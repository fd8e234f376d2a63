#include "pb/backward.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "pb/rng.hpp"

namespace pb {

namespace {

constexpr std::size_t kReduceBlock = 8192;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// feature base per path: state components, running integral components,
// running max norm; features are 1 + base + all degree-2 monomials
int feature_count(int n) {
  const int base = 2 * n + 1;
  return 1 + base + base * (base + 1) / 2;
}

void fill_features(int n, const double* x, const double* integ, double runmax,
                   double* out) {
  const int base = 2 * n + 1;
  int idx = 0;
  out[idx++] = 1.0;
  double zbuf[16];
  for (int c = 0; c < n; ++c) zbuf[c] = x[c];
  for (int c = 0; c < n; ++c) zbuf[n + c] = integ[c];
  zbuf[2 * n] = runmax;
  for (int c = 0; c < base; ++c) out[idx++] = zbuf[c];
  for (int a = 0; a < base; ++a)
    for (int b = a; b < base; ++b) out[idx++] = zbuf[a] * zbuf[b];
}

struct RegressionStep {
  Eigen::MatrixXd coeffs;  // p x targets
  double cond = 0.0;
  int rank = 0;
};

// least squares over the active rows of the design, solved through a
// thresholded eigendecomposition of the normal matrix; block-wise
// accumulation keeps the result independent of the worker count
RegressionStep fit_least_squares(const RowMat& design, const RowMat& targets,
                                 const std::vector<std::uint8_t>& active,
                                 double rtol, bool strict, std::size_t step_k) {
  const int p = static_cast<int>(design.cols());
  const int m = static_cast<int>(targets.cols());
  const std::size_t n_rows = static_cast<std::size_t>(design.rows());

  const std::size_t blocks = (n_rows + kReduceBlock - 1) / kReduceBlock;
  std::vector<Eigen::MatrixXd> g_part(blocks, Eigen::MatrixXd::Zero(p, p));
  std::vector<Eigen::MatrixXd> b_part(blocks, Eigen::MatrixXd::Zero(p, m));
  parallel_for(static_cast<std::int64_t>(blocks), Exec::parallel,
               [&](std::int64_t bi) {
                 const std::size_t lo = bi * kReduceBlock;
                 const std::size_t hi = std::min(n_rows, lo + kReduceBlock);
                 for (std::size_t r = lo; r < hi; ++r) {
                   if (!active[r]) continue;
                   const auto row = design.row(static_cast<Eigen::Index>(r));
                   g_part[bi].noalias() += row.transpose() * row;
                   b_part[bi].noalias() +=
                       row.transpose() * targets.row(static_cast<Eigen::Index>(r));
                 }
               });
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, m);
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    g += g_part[bi];
    b += b_part[bi];
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double lmax = std::max(ev.maxCoeff(), 0.0);
  const double cut = lmax * rtol;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
  int rank = 0;
  double lmin_pos = lmax;
  for (int i = 0; i < p; ++i) {
    if (ev[i] > cut && ev[i] > 0.0) {
      inv[i] = 1.0 / ev[i];
      lmin_pos = std::min(lmin_pos, ev[i]);
      ++rank;
    }
  }
  if (strict && rank < p)
    throw NumericalError("solve_bsde: rank-deficient regression at step " +
                         std::to_string(step_k) + " (rank " +
                         std::to_string(rank) + " of " + std::to_string(p) + ")");
  RegressionStep out;
  out.rank = rank;
  out.cond = (rank > 0 && lmin_pos > 0.0) ? lmax / lmin_pos : 0.0;
  out.coeffs = es.eigenvectors() * inv.asDiagonal() *
               es.eigenvectors().transpose() * b;
  return out;
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::size_t snap_to_grid(const std::vector<double>& times, double t) {
  auto it = std::lower_bound(times.begin(), times.end(), t - 1e-9);
  if (it == times.end() || std::abs(*it - t) > 1e-9)
    throw std::invalid_argument("backward: stop time not on the grid");
  return static_cast<std::size_t>(it - times.begin());
}

BsdeSolution solve_core(const CoefficientSet& coef, const PathBatch& batch,
                        const CondExpEngine& engine,
                        const std::vector<std::size_t>& stop_idx,
                        std::span<const double> eta) {
  if (engine.kind != CondExpEngine::Kind::regression)
    throw std::invalid_argument(
        "solve_bsde: batch solves need the regression engine; the tree engine "
        "works from the initial path via cost_functional");
  const std::size_t n_paths = batch.n_paths;
  const std::size_t g = batch.n_times();
  const std::size_t start = batch.anchor_samples - 1;  // grid index of t
  const int n = batch.dim;
  const int d = batch.noise_dim;
  const int p = feature_count(n);
  if (eta.size() != n_paths)
    throw std::invalid_argument("solve_bsde: terminal value count mismatch");
  for (double e : eta)
    if (!std::isfinite(e))
      throw std::invalid_argument("solve_bsde: non-finite terminal value");

  const std::size_t n_times = g - start;
  BsdeSolution sol;
  sol.times.assign(batch.times.begin() + start, batch.times.end());
  sol.n_paths = n_paths;
  sol.zdim = d;
  sol.y.assign(n_times * n_paths, 0.0);
  sol.z.assign((n_times - 1) * n_paths * d, 0.0);
  sol.cond_numbers.assign(n_times - 1, 0.0);

  // terminal and frozen-after-stop values
  for (std::size_t i = 0; i < n_paths; ++i)
    for (std::size_t k = stop_idx[i]; k < g; ++k)
      sol.y[(k - start) * n_paths + i] = eta[i];

  // forward feature ingredients: running integral and running max per step
  std::vector<double> integ(n_paths * g * n, 0.0);
  std::vector<double> runmax(n_paths * g, 0.0);
  parallel_for(static_cast<std::int64_t>(n_paths), Exec::parallel,
               [&](std::int64_t i) {
    auto vals = batch.path_values(static_cast<std::size_t>(i));
    double* ig = integ.data() + static_cast<std::size_t>(i) * g * n;
    double* rm = runmax.data() + static_cast<std::size_t>(i) * g;
    double nrm0 = 0.0;
    for (int c = 0; c < n; ++c) nrm0 += vals[c] * vals[c];
    rm[0] = std::sqrt(nrm0);
    for (std::size_t k = 1; k < g; ++k) {
      const double dt = batch.times[k] - batch.times[k - 1];
      double nrm = 0.0;
      for (int c = 0; c < n; ++c) {
        ig[k * n + c] = ig[(k - 1) * n + c] +
                        0.5 * dt * (vals[(k - 1) * n + c] + vals[k * n + c]);
        nrm += vals[k * n + c] * vals[k * n + c];
      }
      rm[k] = std::max(rm[k - 1], std::sqrt(nrm));
    }
  });

  RowMat design(n_paths, p);
  RowMat targets(n_paths, 1 + d);
  std::vector<std::uint8_t> active(n_paths, 1);
  std::vector<double> efit(n_paths, 0.0);

  const std::vector<double> zero_u(std::max(coef.control_dim, 1), 0.0);

  for (std::size_t k = g - 1; k-- > start;) {
    const double dt = batch.times[k + 1] - batch.times[k];
    std::size_t n_alive = 0;
    for (std::size_t i = 0; i < n_paths; ++i) {
      active[i] = k < stop_idx[i] ? 1 : 0;
      n_alive += active[i];
    }
    const std::size_t krel = k - start;
    if (n_alive == 0) continue;

    parallel_for(static_cast<std::int64_t>(n_paths), Exec::parallel,
                 [&](std::int64_t i) {
      if (!active[i]) return;
      auto vals = batch.path_values(static_cast<std::size_t>(i));
      fill_features(n, vals.data() + k * n,
                    integ.data() + static_cast<std::size_t>(i) * g * n + k * n,
                    runmax[static_cast<std::size_t>(i) * g + k],
                    design.row(i).data());
      const double ynext = sol.y[(krel + 1) * n_paths + i];
      targets(i, 0) = ynext;
      auto incr = batch.path_increments(static_cast<std::size_t>(i));
      for (int c = 0; c < d; ++c) targets(i, 1 + c) = ynext * incr[k * d + c];
    });

    RegressionStep fit = fit_least_squares(design, targets, active,
                                           engine.svd_rtol, engine.strict_rank,
                                           k);
    sol.cond_numbers[krel] = fit.cond;

    parallel_for(static_cast<std::int64_t>(n_paths), Exec::parallel,
                 [&](std::int64_t i) {
      if (!active[i]) {
        // frozen after the stop: carry eta downward
        sol.y[krel * n_paths + i] = sol.y[(krel + 1) * n_paths + i];
        return;
      }
      const Eigen::VectorXd pred =
          (design.row(i) * fit.coeffs).transpose();
      efit[i] = pred[0];
      double* zrow = sol.z.data() + (krel * n_paths + i) * d;
      for (int c = 0; c < d; ++c) zrow[c] = pred[1 + c] / dt;
    });

    // implicit-in-y fixed point with the driver on the path-so-far
    std::atomic<bool> driver_failed{false};
    parallel_for(static_cast<std::int64_t>(n_paths), Exec::parallel,
                 [&](std::int64_t i) {
      if (!active[i]) return;
      thread_local Path ws;
      ws.reserve(g);
      batch.prefix_into(static_cast<std::size_t>(i), k + 1, ws);
      const double* u = batch.control_dim > 0
                            ? batch.control_at(static_cast<std::size_t>(i), k)
                            : zero_u.data();
      const double* zrow = sol.z.data() + (krel * n_paths + i) * d;
      double y = efit[i];
      for (int it = 0; it < engine.fixed_point_iters; ++it) {
        const double f = coef.generator(ws, y, zrow, u);
        if (!std::isfinite(f)) {
          driver_failed.store(true, std::memory_order_relaxed);
          return;
        }
        y = efit[i] + dt * f;
      }
      sol.y[krel * n_paths + i] = y;
    });
    if (driver_failed.load())
      throw NumericalError("solve_bsde: non-finite driver value at step " +
                           std::to_string(k));

    if (k == start) {
      std::vector<double> tgt(n_paths);
      for (std::size_t i = 0; i < n_paths; ++i) tgt[i] = targets(i, 0);
      sol.y0_se = stddev(tgt) / std::sqrt(static_cast<double>(n_paths));
    }
  }

  double acc = 0.0;
  for (std::size_t i = 0; i < n_paths; ++i) acc += sol.y[i];
  sol.y0_mean = acc / static_cast<double>(n_paths);
  const double dt0 =
      sol.times.size() > 1 ? sol.times[1] - sol.times[0] : 0.0;
  sol.eps_num = 3.0 * sol.y0_se + coef.f_lipschitz * dt0;
  return sol;
}

}  // namespace

BsdeSolution solve_bsde(const CoefficientSet& coef, const PathBatch& batch,
                        const CondExpEngine& engine,
                        std::span<const double> terminal_values) {
  std::vector<std::size_t> stop_idx(batch.n_paths, batch.n_times() - 1);
  return solve_core(coef, batch, engine, stop_idx, terminal_values);
}

BsdeSolution backward_semigroup(const CoefficientSet& coef,
                                const PathBatch& batch,
                                std::span<const double> stop_times,
                                std::span<const double> eta,
                                const CondExpEngine& engine) {
  if (stop_times.size() != batch.n_paths || eta.size() != batch.n_paths)
    throw std::invalid_argument("backward_semigroup: size mismatch");
  const double t_start = batch.times[batch.anchor_samples - 1];
  std::vector<std::size_t> stop_idx(batch.n_paths);
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    if (stop_times[i] < t_start - 1e-9)
      throw std::invalid_argument("backward_semigroup: stop time before start");
    stop_idx[i] = snap_to_grid(batch.times, stop_times[i]);
  }
  return solve_core(coef, batch, engine, stop_idx, eta);
}

namespace {

struct TreeWork {
  const CoefficientSet* coef;
  const double* control;
  std::vector<double> times;  // level k lives at times[k]
  int depth;
  int fp_iters;
  Path ws;
};

double tree_node(TreeWork& w, int level) {
  if (level == w.depth) return w.coef->terminal(w.ws);
  const double t0 = w.times[level];
  const double t1 = w.times[level + 1];
  const double dt = t1 - t0;
  const double sq = std::sqrt(dt);
  double b, s;
  w.coef->drift(w.ws, w.control, &b);
  w.coef->sigma(w.ws, w.control, &s);
  const double x = w.ws.terminal()[0];
  const std::size_t keep = w.ws.samples();

  const double x_up = x + b * dt + s * sq;
  w.ws.append(t1, &x_up);
  const double y_up = tree_node(w, level + 1);
  w.ws.truncate_to(keep);

  const double x_dn = x + b * dt - s * sq;
  w.ws.append(t1, &x_dn);
  const double y_dn = tree_node(w, level + 1);
  w.ws.truncate_to(keep);

  const double efit = 0.5 * (y_up + y_dn);
  const double z = (y_up - y_dn) / (2.0 * sq);
  double y = efit;
  for (int it = 0; it < w.fp_iters; ++it)
    y = efit + dt * w.coef->generator(w.ws, y, &z, w.control);
  return y;
}

}  // namespace

double solve_bsde_tree(const CoefficientSet& coef, const Path& initial,
                       double total_horizon, std::span<const double> control,
                       const CondExpEngine& engine) {
  if (coef.state_dim != 1 || coef.noise_dim != 1)
    throw std::invalid_argument("solve_bsde_tree: 1-d problems only");
  if (engine.tree_depth < 1 || engine.tree_depth > 24)
    throw std::invalid_argument("solve_bsde_tree: depth out of range");
  TreeWork w;
  w.coef = &coef;
  static const double zero = 0.0;
  w.control = control.empty() ? &zero : control.data();
  w.depth = engine.tree_depth;
  w.fp_iters = engine.fixed_point_iters;
  const double t = initial.horizon();
  if (!(total_horizon > t))
    throw std::invalid_argument("solve_bsde_tree: nothing to solve past the horizon");
  // level k appends sample k; level 0 is the initial path itself
  w.times.resize(w.depth + 1);
  for (int k = 0; k <= w.depth; ++k)
    w.times[k] = t + (total_horizon - t) * static_cast<double>(k) /
                         static_cast<double>(w.depth);
  if (initial.has_terminal_offset()) {
    // bake the bump into the last sample so the lattice can grow the path
    std::vector<double> tt(initial.times().begin(), initial.times().end());
    std::vector<double> vv(initial.samples());
    for (std::size_t s = 0; s < initial.samples(); ++s)
      initial.point(s, &vv[s]);
    w.ws = Path(1, std::move(tt), std::move(vv), initial.kind());
  } else {
    w.ws = initial;
  }
  w.ws.reserve(initial.samples() + w.depth);
  return tree_node(w, 0);
}

double cost_functional(const CoefficientSet& coef, const Path& initial,
                       const Policy& policy, const SimConfig& cfg,
                       const CondExpEngine& engine) {
  if (engine.kind == CondExpEngine::Kind::tree) {
    std::vector<double> u(std::max(coef.control_dim, 0), 0.0);
    if (coef.control_dim > 0) policy(initial, u.data());
    return solve_bsde_tree(coef, initial, cfg.horizon, u, engine);
  }
  PathBatch batch = simulate_sde(coef, initial, policy, cfg);
  std::vector<double> xi(batch.n_paths);
  parallel_for(static_cast<std::int64_t>(batch.n_paths), Exec::parallel,
               [&](std::int64_t i) {
                 thread_local Path ws;
                 batch.prefix_into(static_cast<std::size_t>(i),
                                   batch.n_times(), ws);
                 xi[i] = coef.terminal(ws);
               });
  return solve_bsde(coef, batch, engine, xi).y0_mean;
}

namespace {

void probe_generator_order(const CoefficientSet& a, const CoefficientSet& b,
                           const PathBatch& batch, std::uint64_t seed) {
  thread_local Path ws;
  const std::size_t n_probe = std::min<std::size_t>(batch.n_paths, 128);
  const int d = batch.noise_dim;
  std::vector<double> z(d);
  const std::vector<double> zero_u(std::max(a.control_dim, 1), 0.0);
  for (std::size_t i = 0; i < n_probe; ++i) {
    const std::size_t k =
        batch.anchor_samples +
        static_cast<std::size_t>(rng::uniform(seed, i, 0, 0) *
                                 static_cast<double>(batch.n_times() -
                                                     batch.anchor_samples));
    batch.prefix_into(i, std::min(k + 1, batch.n_times()), ws);
    const double y = 6.0 * (rng::uniform(seed, i, 1, 0) - 0.5);
    for (int c = 0; c < d; ++c)
      z[c] = 6.0 * (rng::uniform(seed, i, 2, c) - 0.5);
    const double fa = a.generator(ws, y, z.data(), zero_u.data());
    const double fb = b.generator(ws, y, z.data(), zero_u.data());
    if (fa < fb - 1e-12)
      throw std::invalid_argument(
          "comparison_check: driver ordering violated on a sampled argument");
  }
}

}  // namespace

ComparisonResult comparison_check(const CoefficientSet& a,
                                  const CoefficientSet& b, const Path& initial,
                                  const SimConfig& cfg,
                                  const CondExpEngine& engine) {
  ComparisonResult res;
  if (engine.kind == CondExpEngine::Kind::tree) {
    // shared lattice by construction; verify preconditions on a sampled batch
    SimConfig probe_cfg = cfg;
    probe_cfg.n_paths = 128;
    probe_cfg.steps = engine.tree_depth;
    PathBatch probe = simulate_sde(a, initial, Policy{}, probe_cfg);
    thread_local Path ws;
    for (std::size_t i = 0; i < probe.n_paths; ++i) {
      probe.prefix_into(i, probe.n_times(), ws);
      if (a.terminal(ws) < b.terminal(ws) - 1e-12)
        throw std::invalid_argument(
            "comparison_check: terminal ordering violated on a sampled path");
    }
    probe_generator_order(a, b, probe, cfg.seed + 7);
    res.y1 = solve_bsde_tree(a, initial, cfg.horizon, {}, engine);
    res.y2 = solve_bsde_tree(b, initial, cfg.horizon, {}, engine);
    const double dt = (cfg.horizon - initial.horizon()) /
                      static_cast<double>(engine.tree_depth);
    res.eps_num = std::max(a.f_lipschitz, b.f_lipschitz) * dt;
  } else {
    PathBatch batch = simulate_sde(a, initial, Policy{}, cfg);
    std::vector<double> xi1(batch.n_paths), xi2(batch.n_paths);
    thread_local Path ws;
    for (std::size_t i = 0; i < batch.n_paths; ++i) {
      batch.prefix_into(i, batch.n_times(), ws);
      xi1[i] = a.terminal(ws);
      xi2[i] = b.terminal(ws);
      if (xi1[i] < xi2[i] - 1e-12)
        throw std::invalid_argument(
            "comparison_check: terminal ordering violated on a sampled path");
    }
    probe_generator_order(a, b, batch, cfg.seed + 7);
    BsdeSolution s1 = solve_bsde(a, batch, engine, xi1);
    BsdeSolution s2 = solve_bsde(b, batch, engine, xi2);
    res.y1 = s1.y0_mean;
    res.y2 = s2.y0_mean;
    res.eps_num = std::max(s1.eps_num, s2.eps_num);
  }
  res.margin = res.y1 - res.y2;
  res.ok = res.margin >= -res.eps_num;
  return res;
}

DppResult dpp_check(const std::function<double(const Path&)>& value_engine,
                    const CoefficientSet& coef, const Path& initial,
                    double delta,
                    const std::vector<std::vector<double>>& control_grid,
                    const SimConfig& cfg, const CondExpEngine& engine) {
  DppResult res;
  res.value = value_engine(initial);
  if (delta <= 0.0) {
    res.best = res.value;
    res.discrepancy = 0.0;
    res.per_control.assign(std::max<std::size_t>(control_grid.size(), 1),
                           res.value);
    return res;
  }
  SimConfig sub = cfg;
  sub.horizon = initial.horizon() + delta;
  if (sub.horizon > cfg.horizon + 1e-12)
    throw std::invalid_argument("dpp_check: delta passes the total horizon");

  std::vector<std::vector<double>> grid = control_grid;
  if (grid.empty()) grid.push_back({});

  res.best = -std::numeric_limits<double>::infinity();
  for (const auto& u : grid) {
    Policy pol = u.empty() ? Policy{} : constant_policy(u);
    PathBatch batch = simulate_sde(coef, initial, pol, sub);
    std::vector<double> eta(batch.n_paths);
    parallel_for(static_cast<std::int64_t>(batch.n_paths), Exec::parallel,
                 [&](std::int64_t i) {
                   thread_local Path ws;
                   batch.prefix_into(static_cast<std::size_t>(i),
                                     batch.n_times(), ws);
                   eta[i] = value_engine(ws);
                 });
    std::vector<double> stops(batch.n_paths, sub.horizon);
    BsdeSolution sol = backward_semigroup(coef, batch, stops, eta, engine);
    res.per_control.push_back(sol.y0_mean);
    res.best = std::max(res.best, sol.y0_mean);
  }
  res.discrepancy = std::abs(res.value - res.best);
  return res;
}

}  // namespace pb
