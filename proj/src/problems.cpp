#include "pb/problems.hpp"

#include <algorithm>
#include <cmath>

#include "pb/funcalc.hpp"

namespace pb {

namespace {

CoefficientSet unit_diffusion_base(int n) {
  CoefficientSet c;
  c.state_dim = n;
  c.noise_dim = n;
  c.drift = [n](const Path&, const double*, double* out) {
    std::fill(out, out + n, 0.0);
  };
  c.sigma = [n](const Path&, const double*, double* out) {
    std::fill(out, out + n * n, 0.0);
    for (int i = 0; i < n; ++i) out[i * n + i] = 1.0;
  };
  c.generator = [](const Path&, double, const double*, const double*) {
    return 0.0;
  };
  c.f_lipschitz = 0.0;
  return c;
}

std::vector<std::vector<double>> column_controls(std::vector<double> vals) {
  std::vector<std::vector<double>> out;
  for (double v : vals) out.push_back({v});
  return out;
}

}  // namespace

Problem make_problem(const Config& cfg) {
  const std::string name = cfg.get_str("problem.name", "heat");
  const double total = cfg.get_double("sim.T", 1.0);
  if (!(total > 0.0)) throw ConfigError("sim.T must be positive");

  Problem p;
  p.total_horizon = total;

  if (name == "heat") {
    p.coef = unit_diffusion_base(1);
    p.coef.label = "heat";
    PathFunctional g = make_functional("terminal_square", total);
    p.coef.terminal = [g](const Path& a) { return g(a); };
    p.description = "b=0, sigma=1, f=0, g = squared terminal value";
    return p;
  }
  if (name == "asian") {
    p.coef = unit_diffusion_base(1);
    p.coef.label = "asian";
    PathFunctional g = make_functional("running_integral", total);
    p.coef.terminal = [g](const Path& a) { return g(a); };
    p.description = "b=0, sigma=1, f=0, g = integral of the path";
    return p;
  }
  if (name == "controlled_drift") {
    p.coef = unit_diffusion_base(1);
    p.coef.label = "controlled_drift";
    p.coef.control_dim = 1;
    p.coef.drift = [](const Path&, const double* u, double* out) {
      out[0] = u[0];
    };
    p.coef.control_grid = column_controls(
        cfg.get_list("problem.controls", {-1.0, -0.5, 0.0, 0.5, 1.0}));
    p.coef.control_range = "finite grid on [-1, 1]";
    PathFunctional g = make_functional("terminal_value", total);
    p.coef.terminal = [g](const Path& a) { return g(a); };
    p.description = "b=u, sigma=1, f=0, g = terminal value";
    return p;
  }
  if (name == "delay_demo") {
    const double lag = cfg.get_double("problem.delay", 0.25);
    p.coef = unit_diffusion_base(1);
    p.coef.label = "delay_demo";
    p.coef.control_dim = 1;
    p.coef.drift = [lag](const Path& a, const double* u, double* out) {
      const double s = std::max(a.horizon() - lag, 0.0);
      double v;
      a.value_at(s, &v);
      out[0] = u[0] * v;
    };
    p.coef.control_grid =
        column_controls(cfg.get_list("problem.controls", {0.0, 1.0}));
    p.coef.control_range = "finite grid";
    PathFunctional g = make_functional("terminal_value", total);
    p.coef.terminal = [g](const Path& a) { return g(a); };
    p.description = "b = u * delayed state, sigma=1, f=0, g = terminal value";
    return p;
  }
  if (name == "custom") {
    const double b0 = cfg.get_double("problem.drift_b0", 0.0);
    const double b1 = cfg.get_double("problem.drift_b1", 0.0);
    const double bu = cfg.get_double("problem.drift_bu", 0.0);
    const double s0 = cfg.get_double("problem.sigma_s0", 1.0);
    const double s1 = cfg.get_double("problem.sigma_s1", 0.0);
    const double f0 = cfg.get_double("problem.f_c0", 0.0);
    const double ry = cfg.get_double("problem.f_ry", 0.0);
    const double rz = cfg.get_double("problem.f_rz", 0.0);
    const std::string glabel =
        cfg.get_str("problem.terminal", "terminal_value");

    p.coef = unit_diffusion_base(1);
    p.coef.label = "custom:" + glabel;
    const bool controlled = cfg.has("problem.controls") || bu != 0.0;
    p.coef.control_dim = controlled ? 1 : 0;
    p.coef.drift = [b0, b1, bu](const Path& a, const double* u, double* out) {
      out[0] = b0 + b1 * a.terminal()[0] + bu * u[0];
    };
    p.coef.sigma = [s0, s1](const Path& a, const double*, double* out) {
      out[0] = s0 + s1 * a.terminal()[0];
    };
    p.coef.generator = [f0, ry, rz](const Path&, double y, const double* z,
                                    const double*) {
      return f0 + ry * y + rz * z[0];
    };
    p.coef.f_lipschitz = std::abs(ry) + std::abs(rz);
    if (controlled)
      p.coef.control_grid =
          column_controls(cfg.get_list("problem.controls", {0.0}));
    PathFunctional g = make_functional(glabel, total);
    p.coef.terminal = [g](const Path& a) { return g(a); };
    p.description = "custom affine problem, terminal = " + glabel;
    return p;
  }
  throw ConfigError("unknown problem name: " + name);
}

std::vector<std::string> problem_names() {
  return {"heat", "asian", "controlled_drift", "delay_demo", "custom"};
}

}  // namespace pb
