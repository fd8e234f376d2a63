#include "pb/cascade.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "pb/rng.hpp"

namespace pb {

namespace {

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

void GridSpec::validate(int state_dim) const {
  if (!(total_horizon > 0.0))
    throw std::invalid_argument("GridSpec: total horizon must be positive");
  if (nodes_per_axis < 3 || nodes_per_axis % 2 == 0)
    throw std::invalid_argument("GridSpec: nodes_per_axis must be odd and >= 3");
  if (!(half_width > 0.0))
    throw std::invalid_argument("GridSpec: half_width must be resolved (> 0)");
  if (substeps > 0) {
    const double h = dx();
    const double dt = total_horizon / static_cast<double>(substeps);
    const double rate = static_cast<double>(state_dim) *
                            (sigma_max * sigma_max) / (h * h) +
                        static_cast<double>(state_dim) * drift_max / h;
    if (dt * rate > 1.0)
      throw std::invalid_argument(
          "GridSpec: explicit-scheme CFL violated for the declared bounds; "
          "increase substeps or coarsen the axis");
  }
}

int GridSpec::resolved_substeps(int state_dim, int m) const {
  if (substeps > 0) return substeps;
  const double h = dx();
  const double span = total_horizon / static_cast<double>(m);
  const double rate = static_cast<double>(state_dim) * (sigma_max * sigma_max) /
                          (h * h) +
                      static_cast<double>(state_dim) * drift_max / h;
  const double dt_max = cfl_safety / std::max(rate, 1e-12);
  return std::max(1, static_cast<int>(std::ceil(span / dt_max)));
}

LiftedCoefficients::LiftedCoefficients(CoefficientSet coef, int m,
                                       double total_horizon)
    : coef_(std::move(coef)), m_(m), total_(total_horizon) {
  if (m_ < 1) throw std::invalid_argument("lift_coefficients: m must be positive");
  if (!(total_ > 0.0))
    throw std::invalid_argument("lift_coefficients: total horizon must be positive");
}

LiftedCoefficients lift_coefficients(const CoefficientSet& coef, int m,
                                     double total_horizon) {
  return LiftedCoefficients(coef, m, total_horizon);
}

double LiftedCoefficients::segment_start(int segment) const {
  return total_ * static_cast<double>(segment - 1) / static_cast<double>(m_);
}

double LiftedCoefficients::segment_end(int segment) const {
  return total_ * static_cast<double>(segment) / static_cast<double>(m_);
}

void LiftedCoefficients::build_path(Ctx& ctx, int segment, double t,
                                    const double* xvec) const {
  const int n = coef_.state_dim;
  const int i = segment;
  // stepped path vanishing at 0 with jumps x_j at t_j and the running
  // increment x_i at the terminal time t
  ctx.cum.assign(static_cast<std::size_t>(i + 1) * n, 0.0);
  std::vector<double>& cum = ctx.cum;
  for (int j = 1; j <= i; ++j)
    for (int c = 0; c < n; ++c)
      cum[j * n + c] = cum[(j - 1) * n + c] + xvec[(j - 1) * n + c];

  thread_local std::vector<double> times;
  times.clear();
  times.push_back(0.0);
  for (int j = 1; j < i; ++j) times.push_back(segment_end(j));
  times.push_back(t);
  // cum already holds (0, c_1, ..., c_i) contiguously
  ctx.path.assign(n, times,
                  std::span<const double>(cum.data(), times.size() * n),
                  PathKind::stepped);
}

void LiftedCoefficients::drift(Ctx& ctx, int segment, double t,
                               const double* xvec, const double* u,
                               double* out) const {
  build_path(ctx, segment, t, xvec);
  coef_.drift(ctx.path, u, out);
}

void LiftedCoefficients::sigma(Ctx& ctx, int segment, double t,
                               const double* xvec, const double* u,
                               double* out) const {
  build_path(ctx, segment, t, xvec);
  coef_.sigma(ctx.path, u, out);
}

double LiftedCoefficients::generator(Ctx& ctx, int segment, double t,
                                     const double* xvec, double y,
                                     const double* z, const double* u) const {
  build_path(ctx, segment, t, xvec);
  return coef_.generator(ctx.path, y, z, u);
}

double LiftedCoefficients::terminal(Ctx& ctx, const double* xvec_m) const {
  build_path(ctx, m_, total_, xvec_m);
  return coef_.terminal(ctx.path);
}

namespace {

struct SegmentGeometry {
  int blocks = 1;      // i
  int n = 1;           // state dim
  int dims = 1;        // i * n
  std::size_t nodes = 1;
  int p = 3;           // nodes per axis
  // strides of the last (diffusing) block axes
  std::vector<std::size_t> stride;  // size n, stride[c] for axis (dims - n + c)
};

SegmentGeometry make_geometry(int blocks, int n, int p) {
  SegmentGeometry g;
  g.blocks = blocks;
  g.n = n;
  g.dims = blocks * n;
  g.p = p;
  g.nodes = ipow(static_cast<std::size_t>(p), g.dims);
  g.stride.assign(n, 1);
  for (int c = n - 1; c >= 0; --c) {
    const int axis = g.dims - n + c;
    g.stride[c] = ipow(static_cast<std::size_t>(p), g.dims - 1 - axis);
  }
  return g;
}

void decode_coords(const SegmentGeometry& g, const std::vector<double>& axis,
                   std::size_t idx, double* xvec, int* last_block_pos) {
  for (int a = g.dims - 1; a >= 0; --a) {
    const int pos = static_cast<int>(idx % g.p);
    xvec[a] = axis[pos];
    if (a >= g.dims - g.n) last_block_pos[a - (g.dims - g.n)] = pos;
    idx /= g.p;
  }
}

}  // namespace

CascadeSolution solve_cascade(const LiftedCoefficients& lifted,
                              const GridSpec& grid_in, Exec exec) {
  const int m = lifted.m();
  const int n = lifted.state_dim();
  const int d = lifted.noise_dim();
  if (m * n > 3)
    throw std::invalid_argument(
        "solve_cascade: dimension cap exceeded (finest segment needs i*n <= 3)");
  GridSpec grid = grid_in;
  if (grid.half_width <= 0.0)
    grid.half_width = 5.0 * std::sqrt(grid.total_horizon);
  grid.validate(n);
  if (grid.controls.empty()) grid.controls.push_back({});

  const int p = grid.nodes_per_axis;
  CascadeSolution sol;
  sol.m = m;
  sol.n = n;
  sol.total_horizon = grid.total_horizon;
  sol.grid = grid;
  sol.axis.resize(p);
  const double hw = grid.half_width;
  for (int j = 0; j < p; ++j)
    sol.axis[j] = -hw + 2.0 * hw * static_cast<double>(j) /
                            static_cast<double>(p - 1);
  sol.axis[(p - 1) / 2] = 0.0;
  const double dx = grid.dx();
  const int nsub = grid.resolved_substeps(n, m);

  sol.segments.resize(m);
  const std::size_t n_controls = grid.controls.size();

  std::atomic<bool> cfl_violated{false};
  std::atomic<bool> offdiag_found{false};

  for (int seg = m; seg >= 1; --seg) {
    const SegmentGeometry geom = make_geometry(seg, n, p);
    auto& s = sol.segments[seg - 1];
    s.blocks = seg;
    s.nodes = geom.nodes;
    const double t_lo = lifted.segment_start(seg);
    const double t_hi = lifted.segment_end(seg);
    s.levels.resize(nsub + 1);
    for (int j = 0; j <= nsub; ++j)
      s.levels[j] = t_lo + (t_hi - t_lo) * static_cast<double>(j) /
                              static_cast<double>(nsub);
    s.levels.back() = t_hi;
    s.v.assign(static_cast<std::size_t>(nsub + 1) * geom.nodes, 0.0);

    // terminal level
    double* vterm = s.v.data() + static_cast<std::size_t>(nsub) * geom.nodes;
    if (seg == m) {
      parallel_for(static_cast<std::int64_t>(geom.nodes), exec,
                   [&](std::int64_t idx) {
                     thread_local LiftedCoefficients::Ctx ctx;
                     double xv[3];
                     int lb[3];
                     decode_coords(geom, sol.axis, idx, xv, lb);
                     vterm[idx] = lifted.terminal(ctx, xv);
                   });
    } else {
      // chain: the completed increments keep their slots and the next
      // segment's running increment starts at zero
      const auto& next = sol.segments[seg];
      const double* vnext = next.v.data();  // level 0 of segment seg+1
      const std::size_t block = ipow(static_cast<std::size_t>(p), n);
      std::size_t center = 0;
      for (int c = 0; c < n; ++c)
        center = center * p + static_cast<std::size_t>((p - 1) / 2);
      parallel_for(static_cast<std::int64_t>(geom.nodes), exec,
                   [&](std::int64_t idx) {
                     vterm[idx] =
                         vnext[static_cast<std::size_t>(idx) * block + center];
                   });
    }

    // backward sweep
    for (int lev = nsub - 1; lev >= 0; --lev) {
      const double t_up = s.levels[lev + 1];
      const double dt = s.levels[lev + 1] - s.levels[lev];
      const double* vup =
          s.v.data() + static_cast<std::size_t>(lev + 1) * geom.nodes;
      double* vlo = s.v.data() + static_cast<std::size_t>(lev) * geom.nodes;

      parallel_for(static_cast<std::int64_t>(geom.nodes), exec,
                   [&](std::int64_t idx) {
        thread_local LiftedCoefficients::Ctx ctx;
        thread_local std::vector<double> bvec, smat, amat, pvec, zvec;
        bvec.assign(n, 0.0);
        smat.assign(static_cast<std::size_t>(n) * d, 0.0);
        amat.assign(static_cast<std::size_t>(n) * n, 0.0);
        pvec.assign(n, 0.0);
        zvec.assign(d, 0.0);
        double xv[3];
        int lb[3];
        decode_coords(geom, sol.axis, idx, xv, lb);
        lifted.build_path(ctx, seg, t_up, xv);

        const double v0 = vup[idx];
        // difference quotients along the diffusing block
        double d2[3], dfwd[3], dbwd[3];
        for (int c = 0; c < n; ++c) {
          const std::size_t str = geom.stride[c];
          const int pos = lb[c];
          const double vp = pos + 1 < p ? vup[idx + str] : v0;
          const double vmn = pos > 0 ? vup[idx - str] : v0;
          if (pos > 0 && pos + 1 < p) {
            d2[c] = (vp - 2.0 * v0 + vmn) / (dx * dx);
            dfwd[c] = (vp - v0) / dx;
            dbwd[c] = (v0 - vmn) / dx;
          } else if (pos == 0) {
            // linear extrapolation boundary: flat second difference,
            // one-sided first difference
            d2[c] = 0.0;
            dfwd[c] = (vp - v0) / dx;
            dbwd[c] = dfwd[c];
          } else {
            d2[c] = 0.0;
            dbwd[c] = (v0 - vmn) / dx;
            dfwd[c] = dbwd[c];
          }
        }

        static constexpr double kZeroU[4] = {0.0, 0.0, 0.0, 0.0};
        double best = -std::numeric_limits<double>::infinity();
        double worst_center = 1.0;
        for (std::size_t uc = 0; uc < n_controls; ++uc) {
          const double* u =
              grid.controls[uc].empty() ? kZeroU : grid.controls[uc].data();
          lifted.base().drift(ctx.path, u, bvec.data());
          lifted.base().sigma(ctx.path, u, smat.data());
          for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) {
              double acc = 0.0;
              for (int c = 0; c < d; ++c)
                acc += smat[a * d + c] * smat[b * d + c];
              amat[a * n + b] = acc;
              amat[b * n + a] = acc;
            }
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
              if (a != b &&
                  std::abs(amat[a * n + b]) >
                      1e-10 * (1.0 + std::abs(amat[a * n + a]) +
                               std::abs(amat[b * n + b])))
                offdiag_found.store(true, std::memory_order_relaxed);

          double h = 0.0;
          double center_coef = 1.0;
          for (int c = 0; c < n; ++c) {
            const double acc = amat[c * n + c];
            h += 0.5 * acc * d2[c];
            const double drift_term =
                bvec[c] >= 0.0 ? bvec[c] * dfwd[c] : bvec[c] * dbwd[c];
            h += drift_term;
            pvec[c] = 0.5 * (dfwd[c] + dbwd[c]);
            center_coef -= dt * (acc / (dx * dx) + std::abs(bvec[c]) / dx);
          }
          for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int a = 0; a < n; ++a) acc += smat[a * d + c] * pvec[a];
            zvec[c] = acc;
          }
          h += lifted.base().generator(ctx.path, v0, zvec.data(), u);
          best = std::max(best, h);
          worst_center = std::min(worst_center, center_coef);
        }
        if (worst_center < -1e-9)
          cfl_violated.store(true, std::memory_order_relaxed);
        vlo[idx] = v0 + dt * best;
      });

      if (cfl_violated.load())
        throw NumericalError(
            "solve_cascade: CFL violated during the sweep; increase substeps");
      if (offdiag_found.load())
        throw NumericalError(
            "solve_cascade: non-diagonal diffusion matrix is not supported by "
            "the monotone scheme");
    }
  }
  return sol;
}

namespace {

int segment_of(const CascadeSolution& sol, double t) {
  const double seg_len = sol.total_horizon / static_cast<double>(sol.m);
  int i = static_cast<int>(std::ceil(t / seg_len - 1e-9));
  return std::min(std::max(i, 1), sol.m);
}

}  // namespace

CascadeEval eval_vm(const CascadeSolution& sol, const Path& a) {
  if (a.dim() != sol.n)
    throw std::invalid_argument("eval_vm: dimension mismatch");
  const double t = a.horizon();
  if (t > sol.total_horizon + 1e-9)
    throw std::invalid_argument("eval_vm: path horizon exceeds the solve horizon");
  const int seg = segment_of(sol, t);
  const auto& s = sol.segments[seg - 1];
  const int n = sol.n;
  const int dims = seg * n;
  const double seg_len = sol.total_horizon / static_cast<double>(sol.m);

  // increment coordinates of the path
  std::vector<double> xv(dims, 0.0);
  std::vector<double> prev(n), cur(n);
  a.value_at(0.0, prev.data());
  for (int j = 1; j < seg; ++j) {
    a.value_at(seg_len * static_cast<double>(j), cur.data());
    for (int c = 0; c < n; ++c) xv[(j - 1) * n + c] = cur[c] - prev[c];
    std::swap(prev, cur);
  }
  a.point(a.samples() - 1, cur.data());
  for (int c = 0; c < n; ++c) xv[(seg - 1) * n + c] = cur[c] - prev[c];

  // time interpolation weights
  const double t_clamped =
      std::clamp(t, s.levels.front(), s.levels.back());
  std::size_t lev = 0;
  while (lev + 2 < s.levels.size() && s.levels[lev + 1] < t_clamped) ++lev;
  const double span = s.levels[lev + 1] - s.levels[lev];
  const double wt = span > 0.0 ? (t_clamped - s.levels[lev]) / span : 0.0;

  // multilinear interpolation over the cell containing xv
  CascadeEval out;
  const int p = sol.grid.nodes_per_axis;
  const double hw = sol.grid.half_width;
  const double dx = sol.grid.dx();
  std::vector<int> cell(dims);
  std::vector<double> w(dims);
  for (int ax = 0; ax < dims; ++ax) {
    double x = xv[ax];
    if (x < -hw || x > hw) out.extrapolated = true;
    x = std::clamp(x, -hw, hw);
    double rel = (x + hw) / dx;
    int c0 = std::min(static_cast<int>(rel), p - 2);
    cell[ax] = c0;
    w[ax] = std::clamp(rel - static_cast<double>(c0), 0.0, 1.0);
  }
  const double* v_lo = s.v.data() + lev * s.nodes;
  const double* v_hi = s.v.data() + (lev + 1) * s.nodes;
  double acc = 0.0;
  const int corners = 1 << dims;
  for (int corner = 0; corner < corners; ++corner) {
    double weight = 1.0;
    std::size_t idx = 0;
    for (int ax = 0; ax < dims; ++ax) {
      const int hi = (corner >> ax) & 1;
      weight *= hi ? w[ax] : 1.0 - w[ax];
      idx = idx * p + static_cast<std::size_t>(cell[ax] + hi);
    }
    if (weight == 0.0) continue;
    acc += weight * ((1.0 - wt) * v_lo[idx] + wt * v_hi[idx]);
  }
  out.value = acc;
  return out;
}

double value_functional(const CoefficientSet& coef, const Path& a, int m,
                        GridSpec grid, Exec exec) {
  if (grid.half_width <= 0.0)
    grid.half_width =
        5.0 * (1.0 + sup_norm(a)) * std::sqrt(grid.total_horizon);
  const LiftedCoefficients lifted = lift_coefficients(coef, m, grid.total_horizon);
  const CascadeSolution sol = solve_cascade(lifted, grid, exec);
  return eval_vm(sol, a).value;
}

ConvergenceTable convergence_study(const CoefficientSet& coef, const Path& a,
                                   std::span<const int> ms, GridSpec grid) {
  ConvergenceTable table;
  double prev = 0.0;
  bool have_prev = false;
  for (int m : ms) {
    if (m * coef.state_dim > 3) {
      table.capped = true;
      table.note = "dimension cap i*n <= 3 reached before the list ended";
      break;
    }
    const auto start = std::chrono::steady_clock::now();
    ConvergenceRow row;
    row.m = m;
    row.vm = value_functional(coef, a, m, grid);
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    row.diff_prev = have_prev ? std::abs(row.vm - prev) : 0.0;
    prev = row.vm;
    have_prev = true;
    table.rows.push_back(row);
  }
  return table;
}

V0Result auxiliary_v0(const Path& a, const SimConfig& cfg, Exec exec) {
  V0Result res;
  res.n_paths = static_cast<std::size_t>(cfg.n_paths);
  const double t = a.horizon();
  const double T = cfg.horizon;
  if (t >= T - 1e-12) {
    res.value = sup_norm(a);
    res.se = 0.0;
    res.n_paths = 0;
    return res;
  }
  const int n = a.dim();
  double prefix_sup = sup_norm(a);

  std::vector<double> sums(cfg.n_paths, 0.0);
  if (n == 1) {
    // bridge-corrected running maximum of |W| on [t, T]
    const int k = std::max(1, cfg.steps);
    const double dt = (T - t) / static_cast<double>(k);
    const double x0 = a.terminal()[0];
    parallel_for(static_cast<std::int64_t>(cfg.n_paths), exec,
                 [&](std::int64_t i) {
      double x = x0;
      double m = prefix_sup;
      for (int s = 0; s < k; ++s) {
        const double z =
            rng::normal(cfg.seed, static_cast<std::uint64_t>(i), s, 0);
        const double xn = x + std::sqrt(dt) * z;
        const double dxs = xn - x;
        const double u1 =
            rng::uniform(cfg.seed, static_cast<std::uint64_t>(i), s, 101);
        const double u2 =
            rng::uniform(cfg.seed, static_cast<std::uint64_t>(i), s, 102);
        const double up =
            0.5 * (x + xn + std::sqrt(dxs * dxs - 2.0 * dt * std::log(u1)));
        const double dn =
            0.5 * (x + xn - std::sqrt(dxs * dxs - 2.0 * dt * std::log(u2)));
        m = std::max({m, up, -dn});
        x = xn;
      }
      sums[i] = m;
    });
  } else {
    SimConfig sub = cfg;
    simulate_stream(
        brownian_coefficients(n), a, Policy{}, sub,
        [&](std::size_t i, std::span<const double>, std::span<const double> vals,
            std::span<const double>) {
          double m = 0.0;
          const std::size_t g = vals.size() / n;
          for (std::size_t s = 0; s < g; ++s) {
            double nr = 0.0;
            for (int c = 0; c < n; ++c)
              nr += vals[s * n + c] * vals[s * n + c];
            m = std::max(m, std::sqrt(nr));
          }
          sums[i] = m;
        },
        exec);
  }

  double mean = 0.0;
  for (double v : sums) mean += v;
  mean /= static_cast<double>(cfg.n_paths);
  double var = 0.0;
  for (double v : sums) var += (v - mean) * (v - mean);
  var /= static_cast<double>(std::max(1, cfg.n_paths - 1));
  res.value = mean;
  res.se = std::sqrt(var / static_cast<double>(cfg.n_paths));
  return res;
}

}  // namespace pb
