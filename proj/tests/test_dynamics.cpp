#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pb/dynamics.hpp"
#include "pb/funcalc.hpp"
#include "test_util.hpp"

using namespace pb;

namespace {

CoefficientSet constant_coefficients(double b, double s) {
  CoefficientSet c;
  c.state_dim = 1;
  c.noise_dim = 1;
  c.label = "constant";
  c.drift = [b](const Path&, const double*, double* out) { out[0] = b; };
  c.sigma = [s](const Path&, const double*, double* out) { out[0] = s; };
  c.generator = [](const Path&, double, const double*, const double*) {
    return 0.0;
  };
  c.terminal = [](const Path& p) { return p.terminal()[0]; };
  return c;
}

}  // namespace

TEST_CASE("simulate_sde zero coefficients flat-extend the start") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 16;
  cfg.n_paths = 8;
  cfg.seed = 5;
  const Path start = pbt::random_walk_path(1, 0, 0.4, 20);
  PathBatch batch =
      simulate_sde(constant_coefficients(0.0, 0.0), start, Policy{}, cfg);
  const double tail = start.terminal()[0];
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    auto vals = batch.path_values(i);
    for (std::size_t k = 0; k < batch.n_times(); ++k) {
      const double expect =
          batch.times[k] <= start.horizon() ? start.value_at(batch.times[k])[0]
                                            : tail;
      CHECK(vals[k] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("simulate_sde deterministic drift line") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 64;
  cfg.n_paths = 3;
  cfg.seed = 6;
  const Path start = Path::zero(1, 0.0, 0);
  PathBatch batch =
      simulate_sde(constant_coefficients(1.0, 0.0), start, Policy{}, cfg);
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    auto vals = batch.path_values(i);
    for (std::size_t k = 0; k < batch.n_times(); ++k)
      CHECK(vals[k] == doctest::Approx(batch.times[k]).epsilon(1e-12));
  }
}

TEST_CASE("brownian terminal variance matches the horizon") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 64;
  cfg.n_paths = 40000;
  cfg.seed = 7;
  PathBatch batch = brownian_concat(Path::zero(1, 0.0, 0), cfg);
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    const double xt = batch.path_values(i)[batch.n_times() - 1];
    mean_sq += xt * xt;
  }
  mean_sq /= static_cast<double>(batch.n_paths);
  // Var(X_T^2) = 2 for a standard normal: 3 standard errors
  const double se = std::sqrt(2.0 / static_cast<double>(batch.n_paths));
  CHECK(std::abs(mean_sq - 1.0) <= 3.0 * se);
}

TEST_CASE("markovian simulation equals a classical euler scheme exactly") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 50;
  cfg.seed = 8;
  CoefficientSet coef;
  coef.state_dim = 1;
  coef.noise_dim = 1;
  coef.drift = [](const Path& p, const double*, double* out) {
    out[0] = 0.3 - 0.1 * p.terminal()[0];
  };
  coef.sigma = [](const Path& p, const double*, double* out) {
    out[0] = 0.5 + 0.1 * std::sin(p.terminal()[0]);
  };
  coef.generator = [](const Path&, double, const double*, const double*) {
    return 0.0;
  };
  coef.terminal = [](const Path&) { return 0.0; };
  const Path start = Path::zero(1, 0.0, 0);
  PathBatch batch = simulate_sde(coef, start, Policy{}, cfg);

  // classical state-space Euler on the same increments
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    auto vals = batch.path_values(i);
    auto incr = batch.path_increments(i);
    double x = 0.0;
    for (std::size_t k = 0; k + 1 < batch.n_times(); ++k) {
      const double dt = batch.times[k + 1] - batch.times[k];
      x = x + (0.3 - 0.1 * x) * dt + (0.5 + 0.1 * std::sin(x)) * incr[k];
      CHECK(vals[k + 1] == x);  // bitwise
    }
  }
}

TEST_CASE("reproducibility and serial/parallel equality") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 64;
  cfg.seed = 9;
  const Path start = Path::zero(1, 0.0, 0);
  const CoefficientSet coef = brownian_coefficients(1);
  PathBatch a = simulate_sde(coef, start, Policy{}, cfg);
  PathBatch b = simulate_sde(coef, start, Policy{}, cfg);
  CHECK(a.values == b.values);
  CHECK(a.increments == b.increments);
  PathBatch c = simulate_sde(coef, start, Policy{}, cfg, Exec::serial);
  CHECK(a.values == c.values);
}

TEST_CASE("non-finite coefficients abort with a diagnostic") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 8;
  cfg.n_paths = 4;
  cfg.seed = 10;
  CoefficientSet coef = constant_coefficients(0.0, 1.0);
  coef.drift = [](const Path& p, const double*, double* out) {
    out[0] = p.horizon() > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  CHECK_THROWS_AS(
      simulate_sde(coef, Path::zero(1, 0.0, 0), Policy{}, cfg),
      NumericalError);
}

TEST_CASE("brownian_concat keeps the anchor exactly") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 2000;
  cfg.seed = 11;
  const Path anchor = pbt::random_walk_path(12, 0, 0.5, 32);
  PathBatch batch = brownian_concat(anchor, cfg);
  for (std::size_t i = 0; i < std::min<std::size_t>(batch.n_paths, 10); ++i) {
    auto vals = batch.path_values(i);
    for (std::size_t k = 0; k < batch.anchor_samples; ++k)
      CHECK(vals[k] == anchor.sample(k)[0]);
  }
  // Var(X_T - anchor(t)) = T - t within Monte Carlo error
  double mean_sq = 0.0;
  const double tail = anchor.terminal()[0];
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    const double d = batch.path_values(i)[batch.n_times() - 1] - tail;
    mean_sq += d * d;
  }
  mean_sq /= static_cast<double>(batch.n_paths);
  const double expect = 0.5;
  const double se = expect * std::sqrt(2.0 / static_cast<double>(batch.n_paths));
  CHECK(std::abs(mean_sq - expect) <= 4.0 * se);
}

TEST_CASE("moment_checks zero-coefficient batch has zero deviations") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 16;
  cfg.n_paths = 200;
  cfg.seed = 13;
  const Path start = Path::zero(1, 0.25, 8);
  PathBatch batch =
      simulate_sde(constant_coefficients(0.0, 0.0), start, Policy{}, cfg);
  MomentReport rep = moment_checks(batch, start, 2.0);
  for (double m : rep.deviation_moments) CHECK(m == 0.0);
}

TEST_CASE("moment_checks brownian scaling exponent") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 64;
  cfg.n_paths = 8000;
  cfg.seed = 14;
  const Path start = Path::zero(1, 0.0, 0);
  PathBatch batch = brownian_concat(start, cfg);
  MomentReport rep = moment_checks(batch, start, 2.0);
  CHECK(rep.expected_slope == doctest::Approx(1.0));
  CHECK(rep.slope_ok);
  CHECK(std::abs(rep.fitted_slope - 1.0) <= 0.2);

  // doubling sigma multiplies the p=2 deviation moments by about 4
  PathBatch batch2 =
      simulate_sde(constant_coefficients(0.0, 2.0), start, Policy{}, cfg);
  MomentReport rep2 = moment_checks(batch2, start, 2.0);
  for (std::size_t j = 0; j < rep.deviation_moments.size(); ++j) {
    const double ratio = rep2.deviation_moments[j] / rep.deviation_moments[j];
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.25));
  }

  SimConfig tiny = cfg;
  tiny.n_paths = 50;
  PathBatch small = brownian_concat(start, tiny);
  CHECK_THROWS_AS(moment_checks(small, start, 2.0), std::invalid_argument);
}

TEST_CASE("holder tail estimate is a non-increasing survival function") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 128;
  cfg.n_paths = 4000;
  cfg.seed = 15;
  auto points = holder_tail_estimate(cfg, 0.25, {});
  REQUIRE(points.size() == 4);
  for (std::size_t j = 1; j < points.size(); ++j) {
    CHECK(points[j].mu >= points[j - 1].mu);
    CHECK(points[j].p_hat <= points[j - 1].p_hat + 1e-12);
  }
  // small mu saturates the probability near 1
  auto low = holder_tail_estimate(cfg, 0.25, {1e-6});
  CHECK(low[0].p_hat == doctest::Approx(1.0));
  // confidence intervals bracket the estimate
  for (const auto& tp : points) {
    CHECK(tp.ci_lo <= tp.p_hat + 1e-12);
    CHECK(tp.ci_hi >= tp.p_hat - 1e-12);
  }
}

TEST_CASE("dyadic tail bound closed form") {
  // numeric partial sums of the defining series agree with the closed form
  const double p = 5.0, alpha = 0.25, T = 1.0, cp = 2.0;
  for (double mu : {1.0, 2.0, 5.0}) {
    double series = 0.0;
    for (int q = 0; q < 200; ++q)
      series += 2.0 * std::pow(3.0, p) * cp * T *
                std::pow(std::pow(2.0, -q) * T, p * (0.5 - alpha) - 1.0) *
                std::pow(std::pow(2.0, -alpha) * mu, -p);
    CHECK(dyadic_tail_bound(p, alpha, T, mu, cp) ==
          doctest::Approx(series).epsilon(1e-12));
  }
  // homogeneity: doubling mu divides the bound by exactly 2^p
  const double b1 = dyadic_tail_bound(p, alpha, T, 1.3, cp);
  const double b2 = dyadic_tail_bound(p, alpha, T, 2.6, cp);
  CHECK(b1 / b2 == doctest::Approx(std::pow(2.0, p)).epsilon(1e-12));
  // vanishing at infinity
  CHECK(dyadic_tail_bound(p, alpha, T, 1e9, cp) <= 1e-30);
  // divergent parameter regime refused
  CHECK_THROWS_AS(dyadic_tail_bound(2.0, 0.25, T, 1.0, cp),
                  std::invalid_argument);
}

TEST_CASE("tail estimate dominated by the dyadic bound after matching") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 256;
  cfg.n_paths = 8000;
  cfg.seed = 16;
  const double alpha = 0.25, p = 5.0;
  auto points = holder_tail_estimate(cfg, alpha, {});
  // choose Cp so the bound matches the first quantile point, then the
  // remaining points must sit below the bound (shape check)
  const double unit = dyadic_tail_bound(p, alpha, 1.0, points[0].mu, 1.0);
  const double cp = points[0].p_hat / unit;
  for (std::size_t j = 1; j < points.size(); ++j)
    CHECK(points[j].p_hat <=
          dyadic_tail_bound(p, alpha, 1.0, points[j].mu, cp) + 1e-12);
}

TEST_CASE("combined exit time") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 100;
  cfg.seed = 17;
  const Path anchor = Path::zero(1, 0.25, 16);
  const HolderParams hp(0.25, 1.0);

  // zero-diffusion batch stays at the anchor: all exits at t + kappa
  PathBatch flat =
      simulate_sde(constant_coefficients(0.0, 0.0), anchor, Policy{}, cfg);
  for (double tau : combined_exit_time(flat, anchor, hp, 0.5))
    CHECK(tau == doctest::Approx(0.75));

  // small kappa: a fast-moving path trips the deviation exit at the first
  // grid step (kappa below the first-step deviation, cap beyond it)
  PathBatch moving =
      simulate_sde(constant_coefficients(10.0, 0.0), anchor, Policy{}, cfg);
  const double first = moving.times[moving.anchor_samples];
  const double dt = first - anchor.horizon();
  for (double tau : combined_exit_time(moving, anchor, hp, 2.0 * dt))
    CHECK(tau == doctest::Approx(first));

  // with kappa below the grid spacing the t + kappa cap itself binds
  for (double tau : combined_exit_time(moving, anchor, hp, 1e-9))
    CHECK(tau == doctest::Approx(anchor.horizon() + 1e-9));
}

TEST_CASE("exit time survival rises as delta shrinks on perturbed anchors") {
  const HolderParams hp(0.25, 1.0);
  const Path boundary = Path::sampled(
      0.5, 128, [&](double s) { return std::pow(s, hp.alpha); });
  REQUIRE(holder_modulus(boundary, hp.alpha) <= 1.0 + 1e-12);
  const Path eased = perturb(boundary, hp, 0.25);

  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 256;
  cfg.n_paths = 400;
  cfg.seed = 18;
  PathBatch batch = brownian_concat(eased, cfg);
  auto taus = combined_exit_time(batch, eased, hp, 0.4);
  const double t = eased.horizon();
  double prev = -1.0;
  for (double delta : {0.2, 0.05, 0.01}) {
    std::size_t n = 0;
    for (double tau : taus)
      if (tau >= t + delta) ++n;
    const double frac = static_cast<double>(n) / static_cast<double>(taus.size());
    CHECK(frac + 1e-12 >= prev);  // survival grows as delta shrinks
    prev = frac;
  }
  CHECK(prev >= 0.5);  // most paths survive a short while
}

TEST_CASE("boundary escape experiment") {
  const HolderParams hp(0.25, 1.0);
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 512;
  cfg.n_paths = 1500;
  cfg.seed = 19;
  auto res = boundary_escape_experiment(hp, 0.5, 0.01, cfg, 256);
  CHECK(res.fraction_remaining <= 0.08);  // desk-size N; acceptance is tighter

  auto wider = boundary_escape_experiment(hp, 0.5, 0.05, cfg, 256);
  CHECK(wider.fraction_remaining <= res.fraction_remaining + 1e-12);
}

TEST_CASE("interior anchor keeps most paths in the ball briefly") {
  // replacing the boundary anchor by the zero path: fraction near 1
  const HolderParams hp(0.25, 1.0);
  SimConfig cfg;
  cfg.horizon = 0.5;
  cfg.steps = 64;
  cfg.n_paths = 800;
  cfg.seed = 20;
  const Path zero = Path::zero(1, 0.5, 256);
  SimConfig concat_cfg = cfg;
  concat_cfg.horizon = 0.5 + 0.002;
  PathBatch batch = brownian_concat(zero, concat_cfg);
  std::size_t stay = 0;
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    const Path p = batch.extract(i);
    if (in_holder_ball(p, hp)) ++stay;
  }
  CHECK(static_cast<double>(stay) / static_cast<double>(batch.n_paths) >= 0.9);
}
