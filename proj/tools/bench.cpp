// Benchmark comparing the OpenMP kernels against their serial references:
// Holder modulus scans, Euler-Maruyama batches, and one cascade solve.
#include <chrono>
#include <cstdio>

#include "pb/cascade.hpp"
#include "pb/dynamics.hpp"
#include "pb/funcalc.hpp"
#include "pb/path.hpp"
#include "pb/rng.hpp"

using namespace pb;

namespace {

double now_run(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void line(const char* name, double serial, double parallel) {
  std::printf("%-28s %10.4f s %10.4f s %8.2fx\n", name, serial, parallel,
              parallel > 0.0 ? serial / parallel : 0.0);
}

}  // namespace

int main() {
  std::printf("%-28s %12s %12s %9s\n", "kernel", "serial", "openmp", "speedup");
  std::printf("(threads available: %d)\n", max_threads());

  {
    // modulus of a long Brownian sample, naive pair scan vs lag kernel
    const int k = 4096;
    std::vector<double> times(k + 1), vals(k + 1, 0.0);
    for (int i = 0; i <= k; ++i) times[i] = static_cast<double>(i) / k;
    for (int i = 1; i <= k; ++i)
      vals[i] = vals[i - 1] + std::sqrt(1.0 / k) * rng::normal(7, 0, i, 0);
    const Path p(1, times, vals);
    double ref = 0.0, fast = 0.0;
    const double ts = now_run([&] { ref = pb::ref::holder_modulus(p, 0.25); });
    const double tp = now_run([&] { fast = holder_modulus(p, 0.25); });
    line("holder_modulus (K=4096)", ts, tp);
    if (std::abs(ref - fast) > 1e-12 * std::max(1.0, ref))
      std::printf("  WARNING: serial/parallel mismatch %.17g vs %.17g\n", ref,
                  fast);
  }

  {
    SimConfig cfg;
    cfg.horizon = 1.0;
    cfg.steps = 512;
    cfg.n_paths = 20000;
    cfg.seed = 11;
    const Path start = Path::zero(1, 0.0, 0);
    const CoefficientSet coef = brownian_coefficients(1);
    PathBatch a, b;
    const double ts =
        now_run([&] { a = simulate_sde(coef, start, Policy{}, cfg, Exec::serial); });
    const double tp =
        now_run([&] { b = simulate_sde(coef, start, Policy{}, cfg, Exec::parallel); });
    line("simulate_sde (2e4 x 512)", ts, tp);
    if (a.values != b.values) std::printf("  WARNING: batch mismatch\n");
  }

  {
    CoefficientSet coef = brownian_coefficients(1);
    coef.terminal = [](const Path& p) { return p.terminal().squaredNorm(); };
    GridSpec grid;
    grid.total_horizon = 1.0;
    grid.half_width = 5.0;
    grid.nodes_per_axis = 201;
    const LiftedCoefficients lifted = lift_coefficients(coef, 2, 1.0);
    CascadeSolution sa, sb;
    const double ts = now_run([&] { sa = solve_cascade(lifted, grid, Exec::serial); });
    const double tp = now_run([&] { sb = solve_cascade(lifted, grid, Exec::parallel); });
    line("solve_cascade (m=2, 201^2)", ts, tp);
    bool same = true;
    for (std::size_t i = 0; i < sa.segments.size(); ++i)
      same = same && sa.segments[i].v == sb.segments[i].v;
    if (!same) std::printf("  WARNING: cascade mismatch\n");
  }
  return 0;
}
