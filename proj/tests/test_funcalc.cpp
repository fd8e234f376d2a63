#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pb/funcalc.hpp"
#include "test_util.hpp"

using namespace pb;

namespace {

// cylinder functional f(t, x) with hand-written classical partials,
// registered without analytic derivatives so the numeric route is exercised
struct CylinderCase {
  double a, b, c, d;
  double f(double t, double x) const {
    return a * x * x * x + b * x + c * t * t + d * t * x;
  }
  double fx(double t, double x) const { return 3.0 * a * x * x + b + d * t; }
  double fxx(double, double x) const { return 6.0 * a * x; }
  double ft(double t, double x) const { return 2.0 * c * t + d * x; }
  PathFunctional functional() const {
    auto self = *this;
    return PathFunctional("cylinder_case", [self](const Path& p) {
      return self.f(p.horizon(), p.terminal()[0]);
    });
  }
};

}  // namespace

TEST_CASE("vertical derivative examples") {
  PathFunctional sq("sq", [](const Path& p) { return p.terminal().squaredNorm(); });
  Path g(1, {0.0, 1.0}, {0.0, 2.0});
  CHECK(vertical_derivative(sq, g, 1e-4)[0] == doctest::Approx(4.0).epsilon(1e-8));

  const PathFunctional integral = make_functional("running_integral", 1.0);
  const Path w = pbt::random_walk_path(1, 0, 1.0, 64);
  CHECK(vertical_derivative(integral, w, 1e-3)[0] == 0.0);  // zero weight bump

  CylinderCase cyl{0.3, -0.7, 0.2, 0.5};
  const PathFunctional v = cyl.functional();
  CHECK(vertical_derivative(v, w, 1e-5)[0] ==
        doctest::Approx(cyl.fx(1.0, w.terminal()[0])).epsilon(1e-6));
}

TEST_CASE("vertical hessian examples") {
  PathFunctional sq("sq", [](const Path& p) { return p.terminal().squaredNorm(); });
  const Path g(1, {0.0, 1.0}, {0.0, 0.4});
  CHECK(vertical_hessian(sq, g, 1e-4)(0, 0) == doctest::Approx(2.0).epsilon(1e-6));

  PathFunctional lin("lin", [](const Path& p) { return 3.0 * p.terminal()[0]; });
  CHECK(vertical_hessian(lin, g, 1e-4)(0, 0) == doctest::Approx(0.0).epsilon(1e-6));

  PathFunctional bilinear("bl", [](const Path& p) {
    const auto x = p.terminal();
    return x[0] * x[1];
  });
  const Path g2 = pbt::random_walk_path(2, 0, 1.0, 16, 1.0, 2);
  const Eigen::MatrixXd h = vertical_hessian(bilinear, g2, 1e-4);
  CHECK(h(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(h(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(h(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("horizontal derivative examples") {
  PathFunctional sq("sq", [](const Path& p) { return p.terminal().squaredNorm(); });
  const Path w = pbt::random_walk_path(3, 0, 0.5, 64);
  CHECK(horizontal_derivative(sq, w, 1e-4) == doctest::Approx(0.0).epsilon(1e-10));

  const PathFunctional integral = make_functional("running_integral", 1.0);
  const double c = w.terminal()[0];
  CHECK(horizontal_derivative(integral, w, 1e-4) ==
        doctest::Approx(c).epsilon(1e-3));

  CylinderCase cyl{0.1, 0.4, -0.6, 0.2};
  CHECK(horizontal_derivative(cyl.functional(), w, 1e-6) ==
        doctest::Approx(cyl.ft(0.5, c)).epsilon(1e-4));

  CHECK_THROWS_AS(horizontal_derivative(sq, w, 0.6, 1.0), std::invalid_argument);
}

TEST_CASE("cylinder functionals match classical partial derivatives") {
  for (int trial = 0; trial < 100; ++trial) {
    CylinderCase cyl{rng::uniform(5, trial, 0, 0) - 0.5,
                     rng::uniform(5, trial, 1, 0) - 0.5,
                     rng::uniform(5, trial, 2, 0) - 0.5,
                     rng::uniform(5, trial, 3, 0) - 0.5};
    const PathFunctional v = cyl.functional();
    const Path w = pbt::random_walk_path(6, trial, 0.5 + 0.4 * rng::uniform(5, trial, 4, 0), 48);
    const double t = w.horizon();
    const double x = w.terminal()[0];
    const DerivativeBundle d = dupire_bundle(v, w);
    const double scale = 1.0 + std::abs(x) + std::abs(t);
    CHECK(std::abs(d.dx[0] - cyl.fx(t, x)) <=
          10.0 * (d.bump_h * d.bump_h * scale + 1e-9));
    CHECK(std::abs(d.dxx(0, 0) - cyl.fxx(t, x)) <=
          10.0 * (d.bump_h * scale + 1e-7));
    CHECK(std::abs(d.dt - cyl.ft(t, x)) <= 10.0 * (d.time_h * scale + 1e-9));
  }
}

TEST_CASE("Richardson consistency of the vertical derivative") {
  PathFunctional cubic("cubic", [](const Path& p) {
    const double x = p.terminal()[0];
    return x * x * x;
  });
  const Path g(1, {0.0, 1.0}, {0.0, 0.8});
  const double h = 1e-3;
  const double d1 = vertical_derivative(cubic, g, h)[0];
  const double d2 = vertical_derivative(cubic, g, h / 2.0)[0];
  const double d4 = vertical_derivative(cubic, g, h / 4.0)[0];
  const double e1 = std::abs(d1 - 3.0 * 0.64);
  const double e2 = std::abs(d2 - 3.0 * 0.64);
  const double e4 = std::abs(d4 - 3.0 * 0.64);
  CHECK(e2 <= e1 / 3.0);  // second-order decay, with slack for roundoff
  CHECK(e4 <= e2 / 3.0);
}

TEST_CASE("ito residual telescopes for the identity functional") {
  const PathFunctional idf = make_functional("terminal_value", 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Path x = pbt::random_walk_path(7, trial, 1.0, 128);
    CHECK(std::abs(ito_residual(idf, x)) <= 1e-12);
  }
}

TEST_CASE("ito residual rate for the martingale functional") {
  // v = x^2 - t along Brownian paths: rms residual should shrink by about
  // sqrt(2) when the grid is refined 2x
  PathFunctional mart("x2-t", [](const Path& p) {
    return p.terminal().squaredNorm() - p.horizon();
  });
  mart.with_derivatives(
      [](const Path&) { return -1.0; },
      [](const Path& p) { return Eigen::VectorXd(2.0 * p.terminal()); },
      [](const Path& p) {
        return Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(p.dim(), p.dim()));
      });
  const int n = 400;
  double rms[2] = {0.0, 0.0};
  int idx = 0;
  for (std::size_t steps : {128, 256}) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const Path x = pbt::random_walk_path(8, i + 1000 * idx, 1.0, steps);
      const double r = ito_residual(mart, x);
      acc += r * r;
    }
    rms[idx++] = std::sqrt(acc / n);
  }
  const double ratio = rms[0] / rms[1];
  CHECK(ratio > 1.15);
  CHECK(ratio < 1.75);

  // the squared-increment convention telescopes quadratics exactly
  const Path x = pbt::random_walk_path(8, 9999, 1.0, 256);
  CHECK(std::abs(ito_residual(mart, x,
                              QuadraticVariation::squared_increments)) <=
        1e-11);
}

TEST_CASE("ito residual is first order for smooth integrands") {
  const PathFunctional integral = make_functional("running_integral", 1.0);
  const Path s128 = Path::sampled(1.0, 128, [](double s) { return std::sin(3.0 * s); });
  const Path s256 = Path::sampled(1.0, 256, [](double s) { return std::sin(3.0 * s); });
  const double r1 = std::abs(ito_residual(integral, s128));
  const double r2 = std::abs(ito_residual(integral, s256));
  CHECK(r2 <= 0.75 * r1);
}

TEST_CASE("functional holder norm basics") {
  PathFunctional c7("c7", [](const Path&) { return -7.0; });
  c7.with_derivatives([](const Path&) { return 0.0; },
                      [](const Path& p) { return Eigen::VectorXd(Eigen::VectorXd::Zero(p.dim())); },
                      [](const Path& p) { return Eigen::MatrixXd(Eigen::MatrixXd::Zero(p.dim(), p.dim())); });
  std::vector<Path> sample;
  for (int i = 0; i < 5; ++i)
    sample.push_back(pbt::random_walk_path(9, i, 0.5 + 0.1 * i, 16));
  CHECK(functional_holder_norm(c7, sample, 0.5) == doctest::Approx(7.0));

  // terminal-value functional on constant paths: the quotient is included
  const PathFunctional tv = make_functional("terminal_value", 1.0);
  std::vector<Path> consts;
  consts.push_back(Path(1, {0.0, 1.0}, {0.0, 0.0}));
  consts.push_back(Path(1, {0.0, 1.0}, {1.0, 1.0}));
  const double d = dp_metric(consts[0], consts[1]);
  const double norm = functional_holder_norm(tv, consts, 0.5);
  CHECK(norm >= 1.0 + 1.0 / std::pow(d, 0.5) - 1e-12);

  // growing the sample never decreases the estimate
  std::vector<Path> grown = sample;
  grown.push_back(pbt::random_walk_path(9, 99, 0.9, 16));
  const PathFunctional sq = make_functional("terminal_square", 1.0);
  CHECK(functional_holder_norm(sq, grown, 0.5) >=
        functional_holder_norm(sq, sample, 0.5) - 1e-12);

  CHECK_THROWS_AS(functional_holder_norm(sq, std::span<const Path>{}, 0.5),
                  std::invalid_argument);
}

TEST_CASE("registry analytic derivatives agree with numeric ones") {
  for (const auto& label : functional_labels()) {
    const PathFunctional v = make_functional(label, 1.0);
    if (!v.has_analytic()) continue;
    for (int trial = 0; trial < 10; ++trial) {
      const Path w = pbt::random_walk_path(10, trial, 0.3 + 0.05 * trial, 64);
      const double h = default_bump(w);
      const Eigen::VectorXd dx_n = vertical_derivative(v, w, h);
      const Eigen::VectorXd dx_a = v.analytic_dx(w);
      for (int c = 0; c < w.dim(); ++c)
        CHECK(std::abs(dx_n[c] - dx_a[c]) <=
              1e-4 * (1.0 + std::abs(dx_a[c])));
      const Eigen::MatrixXd xx_n = vertical_hessian(v, w, h);
      const Eigen::MatrixXd xx_a = v.analytic_dxx(w);
      CHECK(std::abs(xx_n(0, 0) - xx_a(0, 0)) <=
            1e-4 * (1.0 + std::abs(xx_a(0, 0))) + 1e-5);
      const double dt_n = horizontal_derivative(v, w, 1e-5);
      CHECK(std::abs(dt_n - v.analytic_dt(w)) <=
            1e-4 * (1.0 + std::abs(v.analytic_dt(w))) + 1e-3);
    }
  }
}

TEST_CASE("derivative bundle symmetry invariant") {
  PathFunctional mixed("mixed", [](const Path& p) {
    const auto x = p.terminal();
    return std::sin(x[0]) * std::cos(x[1]) + x[0] * x[1] * x[1];
  });
  const Path g = pbt::random_walk_path(11, 0, 1.0, 16, 0.5, 2);
  const Eigen::MatrixXd h = vertical_hessian(mixed, g, 1e-4);
  CHECK(std::abs(h(0, 1) - h(1, 0)) <= 1e-10 * (1.0 + std::abs(h(0, 1))));
}

TEST_CASE("registry rejects unknown labels") {
  CHECK_THROWS_AS(make_functional("no_such_thing", 1.0), std::invalid_argument);
}
