#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pb/backward.hpp"
#include "pb/funcalc.hpp"
#include "test_util.hpp"

using namespace pb;

namespace {

CoefficientSet brownian_with_terminal(std::function<double(const Path&)> g,
                                      double f_lip = 0.0) {
  CoefficientSet c = brownian_coefficients(1);
  c.terminal = std::move(g);
  c.f_lipschitz = f_lip;
  return c;
}

std::vector<double> terminal_values(const CoefficientSet& coef,
                                    const PathBatch& batch) {
  std::vector<double> xi(batch.n_paths);
  Path ws;
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    batch.prefix_into(i, batch.n_times(), ws);
    xi[i] = coef.terminal(ws);
  }
  return xi;
}

// random 1-d Markovian monotone pair keyed by an id, built so that
// xi1 >= xi2 pathwise and f1 >= f2 pointwise
std::pair<CoefficientSet, CoefficientSet> monotone_pair(std::uint64_t id) {
  auto u = [id](int slot) { return rng::uniform(424242, id, 0, slot); };
  const double b0 = 0.6 * (u(0) - 0.5), b1 = 0.6 * (u(1) - 0.5);
  const double s0 = 0.5 + 0.5 * u(2), s1 = 0.4 * (u(3) - 0.5);
  const double c0 = 0.8 * (u(4) - 0.5), c1 = 0.8 * (u(5) - 0.5),
               c2 = 0.8 * (u(6) - 0.5);
  const double d0 = 0.05 + 0.25 * u(7), d1 = 0.3 * u(8);
  const double e0 = u(9) - 0.5, e1 = u(10) - 0.5;
  const double h0 = 0.5 * u(11), h1 = 0.5 * u(12);

  CoefficientSet lo;
  lo.state_dim = 1;
  lo.noise_dim = 1;
  lo.drift = [b0, b1](const Path& p, const double*, double* out) {
    out[0] = b0 + b1 * std::tanh(p.terminal()[0]);
  };
  lo.sigma = [s0, s1](const Path& p, const double*, double* out) {
    out[0] = s0 + s1 * std::tanh(p.terminal()[0]);
  };
  lo.generator = [c0, c1, c2](const Path&, double y, const double* z,
                              const double*) {
    return c0 + c1 * std::tanh(y) + c2 * std::tanh(z[0]);
  };
  lo.terminal = [e0, e1](const Path& p) {
    return e0 + e1 * std::tanh(p.terminal()[0]);
  };
  lo.f_lipschitz = std::abs(c1) + std::abs(c2);

  CoefficientSet hi = lo;
  hi.generator = [c0, c1, c2, d0, d1](const Path&, double y, const double* z,
                                      const double*) {
    return c0 + c1 * std::tanh(y) + c2 * std::tanh(z[0]) + d0 +
           d1 / (1.0 + std::exp(-y));
  };
  hi.terminal = [e0, e1, h0, h1](const Path& p) {
    const double th = std::tanh(p.terminal()[0]);
    return e0 + e1 * th + h0 + h1 * th * th;
  };
  hi.f_lipschitz = lo.f_lipschitz + d1;
  return {hi, lo};
}

}  // namespace

TEST_CASE("f=0 reduction equals the plain Monte Carlo mean") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 20000;
  cfg.seed = 101;
  CoefficientSet coef = brownian_with_terminal(
      [](const Path& p) { return p.terminal().squaredNorm(); });
  PathBatch batch = simulate_sde(coef, Path::zero(1, 0.0, 0), Policy{}, cfg);
  auto xi = terminal_values(coef, batch);
  BsdeSolution sol = solve_bsde(coef, batch, CondExpEngine{}, xi);

  double mc = 0.0;
  for (double x : xi) mc += x;
  mc /= static_cast<double>(xi.size());
  CHECK(sol.y0_mean == doctest::Approx(mc).epsilon(1e-9));
  // Gaussian second moment: Y(0) ~ T within 3 standard errors
  CHECK(std::abs(sol.y0_mean - 1.0) <=
        3.0 * std::sqrt(2.0 / static_cast<double>(cfg.n_paths)));
  // terminal consistency is exact per path
  for (std::size_t i = 0; i < batch.n_paths; ++i)
    CHECK(sol.y_at(sol.times.size() - 1, i) == xi[i]);
}

TEST_CASE("constant driver shifts the value by c*T") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 20000;
  cfg.seed = 102;
  const double c = 0.7;
  CoefficientSet coef = brownian_with_terminal(
      [](const Path& p) { return p.terminal()[0]; });
  coef.generator = [c](const Path&, double, const double*, const double*) {
    return c;
  };
  PathBatch batch = simulate_sde(coef, Path::zero(1, 0.0, 0), Policy{}, cfg);
  BsdeSolution sol =
      solve_bsde(coef, batch, CondExpEngine{}, terminal_values(coef, batch));
  // E[xi] = 0, so Y(0) ~ cT within Monte Carlo + step error
  CHECK(std::abs(sol.y0_mean - c) <= 3.0 / std::sqrt(cfg.n_paths) + 0.01);
}

TEST_CASE("linear discounting driver reproduces exp(-rT)") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 64;
  cfg.n_paths = 4000;
  cfg.seed = 103;
  const double r = 0.5;
  CoefficientSet coef = brownian_with_terminal([](const Path&) { return 1.0; },
                                               r);
  coef.generator = [r](const Path&, double y, const double*, const double*) {
    return -r * y;
  };
  PathBatch batch = simulate_sde(coef, Path::zero(1, 0.0, 0), Policy{}, cfg);
  BsdeSolution sol =
      solve_bsde(coef, batch, CondExpEngine{}, terminal_values(coef, batch));
  CHECK(std::abs(sol.y0_mean - std::exp(-r)) <= 0.01);
}

TEST_CASE("flow property of the backward semigroup") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 20000;
  cfg.seed = 104;
  CoefficientSet coef = brownian_with_terminal(
      [](const Path& p) { return std::tanh(p.terminal()[0]); }, 0.3);
  coef.generator = [](const Path&, double y, const double*, const double*) {
    return -0.3 * y;
  };
  PathBatch batch = simulate_sde(coef, Path::zero(1, 0.0, 0), Policy{}, cfg);
  auto xi = terminal_values(coef, batch);
  CondExpEngine engine;
  BsdeSolution full = solve_bsde(coef, batch, engine, xi);

  // deterministic stop halfway through the grid
  const std::size_t mid = batch.n_times() / 2;
  std::vector<double> stops(batch.n_paths, batch.times[mid]);
  std::vector<double> eta(batch.n_paths);
  for (std::size_t i = 0; i < batch.n_paths; ++i)
    eta[i] = full.y_at(mid, i);
  BsdeSolution comp = backward_semigroup(coef, batch, stops, eta, engine);
  CHECK(std::abs(comp.y0_mean - full.y0_mean) <=
        3.0 * full.y0_se + full.eps_num + 1e-6);

  // f = 0 tower-property collapse
  CoefficientSet plain = brownian_with_terminal(
      [](const Path& p) { return p.terminal().squaredNorm(); });
  PathBatch batch2 = simulate_sde(plain, Path::zero(1, 0.0, 0), Policy{}, cfg);
  auto xi2 = terminal_values(plain, batch2);
  BsdeSolution f2 = solve_bsde(plain, batch2, engine, xi2);
  std::vector<double> eta2(batch2.n_paths);
  for (std::size_t i = 0; i < batch2.n_paths; ++i) eta2[i] = f2.y_at(mid, i);
  BsdeSolution c2 = backward_semigroup(plain, batch2, stops, eta2, engine);
  double mc = 0.0;
  for (double x : xi2) mc += x;
  mc /= static_cast<double>(xi2.size());
  CHECK(std::abs(c2.y0_mean - mc) <= 0.02);

  CHECK_THROWS_AS(
      backward_semigroup(coef, batch,
                         std::vector<double>(batch.n_paths, -0.5), eta, engine),
      std::invalid_argument);
}

TEST_CASE("comparison_check basics") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 16;
  cfg.n_paths = 4000;
  cfg.seed = 105;
  CondExpEngine engine;

  CoefficientSet coef = brownian_with_terminal(
      [](const Path& p) { return std::tanh(p.terminal()[0]); });
  ComparisonResult same =
      comparison_check(coef, coef, Path::zero(1, 0.0, 0), cfg, engine);
  CHECK(same.ok);
  CHECK(same.margin == 0.0);  // identical data, identical batch

  CoefficientSet plus = coef;
  plus.terminal = [](const Path& p) {
    return std::tanh(p.terminal()[0]) + 1.0;
  };
  ComparisonResult shifted =
      comparison_check(plus, coef, Path::zero(1, 0.0, 0), cfg, engine);
  CHECK(shifted.ok);
  CHECK(shifted.margin == doctest::Approx(1.0).epsilon(1e-9));

  // violated precondition is refused
  CoefficientSet minus = coef;
  minus.terminal = [](const Path& p) {
    return std::tanh(p.terminal()[0]) - 1.0;
  };
  CHECK_THROWS_AS(
      comparison_check(minus, coef, Path::zero(1, 0.0, 0), cfg, engine),
      std::invalid_argument);
}

TEST_CASE("random monotone pairs keep the ordering (tree engine)") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.seed = 106;
  CondExpEngine engine;
  engine.kind = CondExpEngine::Kind::tree;
  engine.tree_depth = 10;
  for (int id = 0; id < 20; ++id) {
    auto [hi, lo] = monotone_pair(id);
    ComparisonResult res =
        comparison_check(hi, lo, Path::zero(1, 0.0, 0), cfg, engine);
    CHECK(res.ok);
    CHECK(res.margin >= -res.eps_num);
  }
}

TEST_CASE("tree and regression engines agree on markovian benchmarks") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 48;
  cfg.n_paths = 100000;
  cfg.seed = 107;

  // quadratic terminal: the lattice value of sum of +-sqrt(dt) is exactly T
  CoefficientSet heat = brownian_with_terminal(
      [](const Path& p) { return p.terminal().squaredNorm(); });
  CondExpEngine tree;
  tree.kind = CondExpEngine::Kind::tree;
  tree.tree_depth = 12;
  const double y_tree =
      cost_functional(heat, Path::zero(1, 0.0, 0), Policy{}, cfg, tree);
  CHECK(y_tree == doctest::Approx(1.0).epsilon(1e-12));
  CondExpEngine reg;
  const double y_reg =
      cost_functional(heat, Path::zero(1, 0.0, 0), Policy{}, cfg, reg);
  CHECK(std::abs(y_reg - y_tree) <= 0.01 * std::max(1.0, std::abs(y_tree)));

  // discounting driver
  CoefficientSet disc = brownian_with_terminal([](const Path&) { return 1.0; },
                                               0.5);
  disc.generator = [](const Path&, double y, const double*, const double*) {
    return -0.5 * y;
  };
  const double d_tree =
      cost_functional(disc, Path::zero(1, 0.0, 0), Policy{}, cfg, tree);
  const double d_reg =
      cost_functional(disc, Path::zero(1, 0.0, 0), Policy{}, cfg, reg);
  CHECK(std::abs(d_tree - d_reg) <= 0.01 * std::max(1.0, std::abs(d_tree)));
}

TEST_CASE("cost_functional closed forms under constant controls") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 32;
  cfg.n_paths = 20000;
  cfg.seed = 108;
  CoefficientSet coef;
  coef.state_dim = 1;
  coef.noise_dim = 1;
  coef.control_dim = 1;
  coef.drift = [](const Path&, const double* u, double* out) { out[0] = u[0]; };
  coef.sigma = [](const Path&, const double*, double* out) { out[0] = 1.0; };
  coef.generator = [](const Path&, double, const double*, const double*) {
    return 0.0;
  };
  coef.terminal = [](const Path& p) { return p.terminal()[0]; };
  CondExpEngine engine;
  const double tol = 3.0 / std::sqrt(cfg.n_paths) + 0.01;
  CHECK(std::abs(cost_functional(coef, Path::zero(1, 0.0, 0),
                                 constant_policy({1.0}), cfg, engine) -
                 1.0) <= tol);
  CHECK(std::abs(cost_functional(coef, Path::zero(1, 0.0, 0),
                                 constant_policy({-1.0}), cfg, engine) +
                 1.0) <= tol);

  // zero-mean integral payoff
  PathFunctional integral = make_functional("running_integral", 1.0);
  CoefficientSet asian = brownian_with_terminal(
      [integral](const Path& p) { return integral(p); });
  CHECK(std::abs(cost_functional(asian, Path::zero(1, 0.0, 0), Policy{}, cfg,
                                 engine)) <= tol);
}

TEST_CASE("dpp_check") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 16;
  cfg.n_paths = 20000;
  cfg.seed = 109;
  CondExpEngine engine;

  // markovian heat case: tower property of the analytic value
  CoefficientSet heat = brownian_with_terminal(
      [](const Path& p) { return p.terminal().squaredNorm(); });
  PathFunctional value = make_functional("heat_solution", 1.0);
  DppResult res =
      dpp_check([&value](const Path& p) { return value(p); }, heat,
                Path::zero(1, 0.25, 16), 0.25, {}, cfg, engine);
  CHECK(res.discrepancy <= 0.02 * std::max(1.0, std::abs(res.value)));

  // delta = 0 collapses exactly
  DppResult zero =
      dpp_check([&value](const Path& p) { return value(p); }, heat,
                Path::zero(1, 0.25, 16), 0.0, {}, cfg, engine);
  CHECK(zero.discrepancy == 0.0);
}

TEST_CASE("strict rank mode reports degenerate designs") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.steps = 8;
  cfg.n_paths = 500;
  cfg.seed = 110;
  CoefficientSet flat;
  flat.state_dim = 1;
  flat.noise_dim = 1;
  flat.drift = [](const Path&, const double*, double* out) { out[0] = 0.0; };
  flat.sigma = [](const Path&, const double*, double* out) { out[0] = 0.0; };
  flat.generator = [](const Path&, double, const double*, const double*) {
    return 0.0;
  };
  flat.terminal = [](const Path& p) { return p.terminal()[0]; };
  PathBatch batch = simulate_sde(flat, Path::zero(1, 0.0, 0), Policy{}, cfg);
  auto xi = terminal_values(flat, batch);
  CondExpEngine strict;
  strict.strict_rank = true;
  CHECK_THROWS_AS(solve_bsde(flat, batch, strict, xi), NumericalError);
  // the default engine handles it through the min-norm route
  BsdeSolution sol = solve_bsde(flat, batch, CondExpEngine{}, xi);
  CHECK(sol.y0_mean == doctest::Approx(0.0));
}

TEST_CASE("tree engine rejects unsupported shapes") {
  CondExpEngine tree;
  tree.kind = CondExpEngine::Kind::tree;
  CoefficientSet c2 = brownian_coefficients(2);
  c2.terminal = [](const Path& p) { return p.terminal().squaredNorm(); };
  CHECK_THROWS_AS(
      solve_bsde_tree(c2, Path::zero(2, 0.0, 0), 1.0, {}, tree),
      std::invalid_argument);

  SimConfig cfg;
  cfg.n_paths = 10;
  cfg.steps = 4;
  CoefficientSet c1 = brownian_coefficients(1);
  c1.terminal = [](const Path& p) { return p.terminal()[0]; };
  PathBatch batch = simulate_sde(c1, Path::zero(1, 0.0, 0), Policy{}, cfg);
  auto xi = terminal_values(c1, batch);
  CHECK_THROWS_AS(solve_bsde(c1, batch, tree, xi), std::invalid_argument);
}
