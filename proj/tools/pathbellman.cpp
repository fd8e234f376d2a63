#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "pb/backward.hpp"
#include "pb/cascade.hpp"
#include "pb/csv.hpp"
#include "pb/dynamics.hpp"
#include "pb/funcalc.hpp"
#include "pb/problems.hpp"
#include "pb/rng.hpp"
#include "pb/viscosity.hpp"

namespace {

using namespace pb;

struct RunContext {
  Config cfg;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::string input_hash;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  std::string out_path(const std::string& name) {
    outputs.push_back(name);
    return out_dir + "/" + name;
  }
  void finish(const std::string& subcommand) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(out_dir, subcommand, cfg, seed, input_hash, wall, outputs);
  }
};

SimConfig sim_from_config(const Config& cfg, std::uint64_t seed) {
  SimConfig sim;
  sim.horizon = cfg.get_double("sim.T", 1.0);
  sim.steps = static_cast<int>(cfg.get_int("sim.steps", 256));
  sim.n_paths = static_cast<int>(cfg.get_int("sim.paths", 10000));
  sim.seed = seed;
  if (sim.steps < 1 || sim.n_paths < 1)
    throw ConfigError("sim.steps and sim.paths must be positive");
  return sim;
}

GridSpec grid_from_config(const Config& cfg, const Problem& problem) {
  GridSpec g;
  g.total_horizon = problem.total_horizon;
  g.half_width = cfg.get_double("cascade.half_width", 0.0);
  g.nodes_per_axis = static_cast<int>(cfg.get_int("cascade.nodes", 61));
  g.substeps = static_cast<int>(cfg.get_int("cascade.substeps", 0));
  g.cfl_safety = cfg.get_double("cascade.cfl_safety", 0.9);
  g.sigma_max = cfg.get_double("cascade.sigma_max", 1.0);
  g.drift_max = cfg.get_double("cascade.drift_max", 1.0);
  g.controls = problem.coef.control_grid;
  return g;
}

Path initial_from_config(const Config& cfg) {
  const std::string kind = cfg.get_str("initial.kind", "zero");
  const double t = cfg.get_double("initial.horizon", 0.0);
  const auto samples =
      static_cast<std::size_t>(cfg.get_int("initial.samples", 256));
  if (kind == "zero") return Path::zero(1, t, t > 0.0 ? samples : 0);
  if (kind == "linear") {
    const double slope = cfg.get_double("initial.slope", 1.0);
    return Path::sampled(t, t > 0.0 ? samples : 0,
                         [slope](double s) { return slope * s; });
  }
  if (kind == "csv") return read_path_csv(cfg.require_str("initial.file"));
  throw ConfigError("initial.kind must be zero | linear | csv");
}

// analytic value functionals for the registry benchmarks
PathFunctional value_engine_for(const Problem& problem) {
  if (problem.coef.label == "heat")
    return make_functional("heat_solution", problem.total_horizon);
  if (problem.coef.label == "controlled_drift")
    return make_functional("drift_solution", problem.total_horizon);
  if (problem.coef.label == "asian")
    return make_functional("asian_solution", problem.total_horizon);
  throw ConfigError("no analytic value engine for problem " +
                    problem.coef.label + "; supply viscosity.candidate");
}

Path random_interior_path(std::uint64_t seed, std::uint64_t id, double t_max) {
  const double t = 0.1 * t_max + 0.7 * t_max * rng::uniform(seed, id, 0, 9000);
  const std::size_t k = 64;
  std::vector<double> times(k + 1), values(k + 1, 0.0);
  const double dt = t / static_cast<double>(k);
  for (std::size_t s = 0; s <= k; ++s)
    times[s] = t * static_cast<double>(s) / static_cast<double>(k);
  for (std::size_t s = 1; s <= k; ++s)
    values[s] = values[s - 1] +
                0.4 * std::sqrt(dt) * rng::normal(seed, id, s, 9001);
  return Path(1, std::move(times), std::move(values));
}

int cmd_simulate(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
  const Path initial = initial_from_config(ctx.cfg);
  Policy pol;
  if (problem.coef.control_dim > 0) {
    auto u = ctx.cfg.get_list("run.control", {0.0});
    pol = constant_policy(u);
  }
  PathBatch batch = simulate_sde(problem.coef, initial, pol, sim);
  CsvWriter csv(ctx.out_path("batch.csv"), {"path", "time", "x1"});
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    auto vals = batch.path_values(i);
    for (std::size_t k = 0; k < batch.n_times(); ++k)
      csv.row({static_cast<double>(i), batch.times[k], vals[k]});
  }
  std::cout << "simulate: " << batch.n_paths << " paths, "
            << batch.n_times() << " grid points ("
            << problem.coef.label << ")\n";
  ctx.finish("simulate");
  return 0;
}

int cmd_holder_tail(RunContext& ctx) {
  SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
  const double alpha = ctx.cfg.get_double("tail.alpha", 0.25);
  auto mus = ctx.cfg.get_list("tail.mus", {});
  auto points = holder_tail_estimate(sim, alpha, mus);
  CsvWriter csv(ctx.out_path("holder_tail.csv"),
                {"mu", "p_hat", "ci_lo", "ci_hi", "exceedances", "usable"});
  for (const auto& tp : points)
    csv.row({tp.mu, tp.p_hat, tp.ci_lo, tp.ci_hi,
             static_cast<double>(tp.exceedances), tp.usable ? 1.0 : 0.0});
  std::cout << "holder-tail: " << points.size() << " quantile points at alpha="
            << alpha << "\n";
  ctx.finish("holder-tail");
  return 0;
}

int cmd_boundary_escape(RunContext& ctx) {
  SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
  const HolderParams hp(ctx.cfg.get_double("escape.alpha", 0.25),
                        ctx.cfg.get_double("escape.mu", 1.0));
  const double t1 = ctx.cfg.get_double("escape.t1", 0.5);
  auto deltas = ctx.cfg.get_list("escape.deltas", {0.01});
  const int anchor_steps =
      static_cast<int>(ctx.cfg.get_int("escape.anchor_steps", 512));
  CsvWriter csv(ctx.out_path("boundary_escape.csv"),
                {"delta", "fraction_remaining", "paths"});
  for (double d : deltas) {
    auto res = boundary_escape_experiment(hp, t1, d, sim, anchor_steps);
    csv.row({d, res.fraction_remaining, static_cast<double>(res.n_paths)});
    std::cout << "boundary-escape: delta=" << d << " fraction="
              << res.fraction_remaining << "\n";
  }
  ctx.finish("boundary-escape");
  return 0;
}

int cmd_bsde(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
  const Path initial = initial_from_config(ctx.cfg);
  Policy pol;
  if (problem.coef.control_dim > 0)
    pol = constant_policy(ctx.cfg.get_list("run.control", {0.0}));
  PathBatch batch = simulate_sde(problem.coef, initial, pol, sim);
  std::vector<double> xi(batch.n_paths);
  Path ws;
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    batch.prefix_into(i, batch.n_times(), ws);
    xi[i] = problem.coef.terminal(ws);
  }
  CondExpEngine engine;
  BsdeSolution sol = solve_bsde(problem.coef, batch, engine, xi);

  CsvWriter csv(ctx.out_path("bsde.csv"),
                {"time", "mean_y", "se_y", "mean_abs_z"});
  const std::size_t nt = sol.times.size();
  for (std::size_t k = 0; k < nt; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < sol.n_paths; ++i) mean += sol.y_at(k, i);
    mean /= static_cast<double>(sol.n_paths);
    double var = 0.0;
    for (std::size_t i = 0; i < sol.n_paths; ++i) {
      const double d = sol.y_at(k, i) - mean;
      var += d * d;
    }
    var /= static_cast<double>(sol.n_paths > 1 ? sol.n_paths - 1 : 1);
    double mean_abs_z = 0.0;
    if (k + 1 < nt) {
      for (std::size_t i = 0; i < sol.n_paths; ++i) {
        double nz = 0.0;
        for (int c = 0; c < sol.zdim; ++c) {
          const double z = sol.z[(k * sol.n_paths + i) * sol.zdim + c];
          nz += z * z;
        }
        mean_abs_z += std::sqrt(nz);
      }
      mean_abs_z /= static_cast<double>(sol.n_paths);
    }
    csv.row({sol.times[k], mean,
             std::sqrt(var / static_cast<double>(sol.n_paths)), mean_abs_z});
  }
  std::cout << "bsde: Y(start) = " << sol.y0_mean << " +- " << sol.y0_se
            << " (eps_num " << sol.eps_num << ")\n";
  ctx.finish("bsde");
  return 0;
}

int cmd_dpp_check(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
  const Path initial = initial_from_config(ctx.cfg);
  const double delta = ctx.cfg.get_double("dpp.delta", 0.25);
  PathFunctional engine_fn = value_engine_for(problem);
  CondExpEngine engine;
  DppResult res = dpp_check([&engine_fn](const Path& a) { return engine_fn(a); },
                            problem.coef, initial, delta,
                            problem.coef.control_grid, sim, engine);
  CsvWriter csv(ctx.out_path("dpp.csv"),
                {"value", "best_semigroup", "discrepancy"});
  csv.row({res.value, res.best, res.discrepancy});
  std::cout << "dpp-check: value=" << res.value << " best=" << res.best
            << " discrepancy=" << res.discrepancy << "\n";
  ctx.finish("dpp-check");
  return 0;
}

int cmd_cascade(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  const Path initial = initial_from_config(ctx.cfg);
  GridSpec grid = grid_from_config(ctx.cfg, problem);
  auto ms_real = ctx.cfg.get_list("cascade.m", {1, 2});
  std::vector<int> ms;
  for (double m : ms_real) ms.push_back(static_cast<int>(m));
  ConvergenceTable table = convergence_study(problem.coef, initial, ms, grid);
  CsvWriter csv(ctx.out_path("cascade.csv"),
                {"m", "v_m", "diff_prev", "seconds"});
  for (const auto& row : table.rows) {
    csv.row({static_cast<double>(row.m), row.vm, row.diff_prev, row.seconds});
    std::cout << "cascade: m=" << row.m << " v=" << row.vm
              << " diff=" << row.diff_prev << " (" << row.seconds << " s)\n";
  }
  if (table.capped) std::cout << "cascade: " << table.note << "\n";
  if (ctx.cfg.get_int("cascade.dump_grid", 0) == 1 && !table.rows.empty()) {
    // level-0 slice of segment 1 for the last solved m
    const int m = table.rows.back().m;
    GridSpec g = grid;
    if (g.half_width <= 0.0)
      g.half_width = 5.0 * (1.0 + sup_norm(initial)) *
                     std::sqrt(g.total_horizon);
    auto sol = solve_cascade(lift_coefficients(problem.coef, m,
                                               g.total_horizon),
                             g);
    CsvWriter dump(ctx.out_path("cascade_grid.csv"), {"x", "v"});
    const auto& seg = sol.segments.front();
    for (int j = 0; j < g.nodes_per_axis; ++j)
      dump.row({sol.axis[j], seg.v[j]});
  }
  ctx.finish("cascade");
  return 0;
}

int cmd_ppde_residual(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  const std::string label = ctx.cfg.has("viscosity.candidate")
                                ? ctx.cfg.require_str("viscosity.candidate")
                                : value_engine_for(problem).label();
  SmoothCandidate cand(make_functional(label, problem.total_horizon));
  const auto n = static_cast<std::size_t>(ctx.cfg.get_int("viscosity.paths", 100));
  auto grid = problem.coef.control_grid;
  if (grid.empty()) grid.push_back({});
  CsvWriter csv(ctx.out_path("ppde_residual.csv"),
                {"path", "horizon", "residual"});
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Path a = random_interior_path(ctx.seed, i, problem.total_horizon);
    const double r = ppde_residual(cand, a, grid, problem.coef);
    worst = std::max(worst, std::abs(r));
    csv.row({static_cast<double>(i), a.horizon(), r});
  }
  std::cout << "ppde-residual: max |residual| = " << worst << " over " << n
            << " paths (" << label << ")\n";
  ctx.finish("ppde-residual");
  return 0;
}

int cmd_jet_check(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  const double total = problem.total_horizon;
  PathFunctional v = value_engine_for(problem);
  const HolderParams hp(ctx.cfg.get_double("jets.alpha", 0.25),
                        ctx.cfg.get_double("jets.mu", 10.0));
  const JetParams jp(hp, ctx.cfg.get_double("jets.kappa", 0.2),
                     ctx.cfg.get_double("jets.M0", 10.0),
                     ctx.cfg.get_double("jets.beta", 0.5), total);
  const auto n_base = static_cast<std::size_t>(ctx.cfg.get_int("jets.bases", 5));
  auto cs = ctx.cfg.get_list("jets.offsets", {0.0, 0.5});

  CsvWriter csv(ctx.out_path("jet_check.csv"),
                {"base", "offset", "verdict", "min_gap", "max_gap",
                 "holder_norm", "norm_ok"});
  for (std::size_t b = 0; b < n_base; ++b) {
    Path base = random_interior_path(ctx.seed + 11, b, total * 0.6);
    if (!in_holder_ball(base, hp)) continue;
    // probe sample: the base, flat extensions, and small wiggle continuations
    std::vector<Path> sample;
    sample.push_back(base);
    for (int j = 1; j <= 6; ++j)
      sample.push_back(
          flat_extend(base, base.horizon() + jp.kappa * 0.9 * j / 6.0));
    for (int j = 0; j < 12; ++j) {
      const double tau = jp.kappa * 0.9 * rng::uniform(ctx.seed, b, j, 40);
      Path tail = Path::sampled(std::max(tau, 1e-3), 16, [&](double s) {
        return 0.1 * jp.kappa *
               std::sin(6.28 * (s + static_cast<double>(j)) /
                        std::max(tau, 1e-3));
      });
      sample.push_back(concat(base, tail));
    }
    for (double c : cs) {
      const double t_base = base.horizon();
      PathFunctional psi_fn(
          "value+offset", [&v, c, t_base](const Path& q) {
            return v(q) + c * (q.horizon() - t_base);
          });
      psi_fn.with_derivatives(
          [&v, c](const Path& q) { return v.analytic_dt(q) + c; },
          [&v](const Path& q) { return v.analytic_dx(q); },
          [&v](const Path& q) { return v.analytic_dxx(q); });
      SmoothCandidate psi(psi_fn);
      JetEvidence ev = jet_membership(psi, v, base, jp, sample);
      const char* verdict =
          ev.verdict == JetVerdict::super ? "super"
          : ev.verdict == JetVerdict::sub ? "sub"
          : ev.verdict == JetVerdict::both ? "both" : "neither";
      csv.row_mixed({std::to_string(b), format_double(c), verdict,
                     format_double(ev.min_gap), format_double(ev.max_gap),
                     format_double(ev.holder_norm), ev.norm_ok ? "1" : "0"});
      std::cout << "jet-check: base " << b << " offset " << c << " -> "
                << verdict << "\n";
    }
  }
  ctx.finish("jet-check");
  return 0;
}

int cmd_verify(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
  const Path initial = initial_from_config(ctx.cfg);
  SmoothCandidate v(value_engine_for(problem));
  auto candidate = ctx.cfg.get_list("verify.candidate_control", {1.0});
  CondExpEngine engine;
  VerificationReport rep = verification_demo(
      v, problem.coef, constant_policy(candidate), initial, sim, engine);
  std::ofstream report(ctx.out_dir + "/verify.txt");
  ctx.outputs.push_back("verify.txt");
  CsvWriter csv(ctx.out_path("verify.csv"), {"control", "gap"});
  for (const auto& [label, gap] : rep.gaps) {
    report << label << ": v - J = " << gap << "\n";
    csv.row_mixed({label, format_double(gap)});
    std::cout << "verify: " << label << " gap " << gap << "\n";
  }
  report << "candidate policy gap: " << rep.optimal_gap << "\n";
  report << (rep.ok ? "all gaps within tolerance" : "tolerance violated")
         << " (eps_num " << rep.eps_num << ")\n";
  std::cout << "verify: candidate gap " << rep.optimal_gap
            << (rep.ok ? " (ok)" : " (violated)") << "\n";
  ctx.finish("verify");
  return rep.ok ? 0 : 3;
}

int cmd_ito_check(RunContext& ctx) {
  const Problem problem = make_problem(ctx.cfg);
  const std::string label =
      ctx.cfg.get_str("ito.functional", "heat_solution");
  PathFunctional v = make_functional(label, problem.total_horizon);
  auto steps_list = ctx.cfg.get_list("ito.steps", {512, 1024});
  const auto n = static_cast<int>(ctx.cfg.get_int("ito.paths", 2000));
  CsvWriter csv(ctx.out_path("ito.csv"), {"steps", "rms_residual"});
  double prev = 0.0;
  for (double ks : steps_list) {
    SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
    sim.steps = static_cast<int>(ks);
    sim.n_paths = n;
    std::vector<double> sq(n, 0.0);
    simulate_stream(
        brownian_coefficients(1), Path::zero(1, 0.0, 0), Policy{}, sim,
        [&](std::size_t i, std::span<const double> times,
            std::span<const double> vals, std::span<const double>) {
          Path x(1, std::vector<double>(times.begin(), times.end()),
                 std::vector<double>(vals.begin(), vals.end()));
          const double r = ito_residual(v, x);
          sq[i] = r * r;
        });
    double mean_sq = 0.0;
    for (double s : sq) mean_sq += s;
    const double rms = std::sqrt(mean_sq / static_cast<double>(n));
    csv.row({ks, rms});
    std::cout << "ito-check: steps=" << ks << " rms=" << rms;
    if (prev > 0.0) std::cout << " ratio=" << prev / rms;
    std::cout << "\n";
    prev = rms;
  }
  ctx.finish("ito-check");
  return 0;
}

int cmd_report(RunContext& ctx) {
  std::ofstream report(ctx.out_dir + "/report.txt");
  ctx.outputs.push_back("report.txt");
  report << "pathbellman summary report\n";

  {
    Config heat_cfg = ctx.cfg;
    heat_cfg.set("problem.name", "heat");
    const Problem problem = make_problem(heat_cfg);
    GridSpec grid = grid_from_config(heat_cfg, problem);
    grid.nodes_per_axis = 101;
    const Path start = Path::zero(1, 0.0, 0);
    for (int m : {1, 2}) {
      const double v = value_functional(problem.coef, start, m, grid);
      report << "heat value (m=" << m << "): " << v << "\n";
    }
  }
  {
    SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
    sim.n_paths = std::min(sim.n_paths, 20000);
    sim.steps = 256;
    auto points = holder_tail_estimate(sim, 0.25, {});
    for (const auto& tp : points)
      report << "modulus tail: mu=" << tp.mu << " p_hat=" << tp.p_hat
             << " [" << tp.ci_lo << ", " << tp.ci_hi << "]\n";
  }
  {
    SimConfig sim = sim_from_config(ctx.cfg, ctx.seed);
    sim.n_paths = std::min(sim.n_paths, 20000);
    V0Result v0 = auxiliary_v0(Path::zero(1, 0.0, 0), sim);
    report << "expected running max of |W| on [0," << sim.horizon
           << "]: " << v0.value << " +- " << v0.se << "\n";
  }
  std::cout << "report written to " << ctx.out_dir << "/report.txt\n";
  ctx.finish("report");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical toolkit for path-dependent optimal stochastic control"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::string out_dir = "out";
  long long seed_flag = -1;
  int workers = 0;
  app.add_option("--config", config_file, "configuration file");
  app.add_option("--seed", seed_flag, "seed override");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "worker threads (0 = library default)");

  const std::vector<std::string> names = {
      "simulate",  "holder-tail",   "boundary-escape", "bsde",
      "dpp-check", "cascade",       "ppde-residual",   "jet-check",
      "verify",    "ito-check",     "report"};
  std::map<std::string, std::vector<std::string>> extras;
  for (const auto& n : names) {
    auto* sub = app.add_subcommand(n);
    sub->add_option("overrides", extras[n], "key=value overrides");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // unknown subcommand / bad flags are config errors
  }

  try {
    RunContext ctx;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw pb::ConfigError("cannot open config file: " + config_file);
      std::stringstream ss;
      ss << in.rdbuf();
      ctx.cfg = pb::Config::from_text(ss.str());
      ctx.input_hash = pb::content_hash(ss.str());
    } else {
      ctx.input_hash = pb::content_hash("");
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    for (const auto& kv : extras[sub]) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw pb::ConfigError("override must look like key=value: " + kv);
      ctx.cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed_flag >= 0) ctx.cfg.set("sim.seed", std::to_string(seed_flag));
    ctx.seed = static_cast<std::uint64_t>(ctx.cfg.get_int("sim.seed", 1));
    if (workers > 0) pb::set_threads(workers);
    ctx.out_dir = out_dir;
    std::filesystem::create_directories(ctx.out_dir);

    if (sub == "simulate") return cmd_simulate(ctx);
    if (sub == "holder-tail") return cmd_holder_tail(ctx);
    if (sub == "boundary-escape") return cmd_boundary_escape(ctx);
    if (sub == "bsde") return cmd_bsde(ctx);
    if (sub == "dpp-check") return cmd_dpp_check(ctx);
    if (sub == "cascade") return cmd_cascade(ctx);
    if (sub == "ppde-residual") return cmd_ppde_residual(ctx);
    if (sub == "jet-check") return cmd_jet_check(ctx);
    if (sub == "verify") return cmd_verify(ctx);
    if (sub == "ito-check") return cmd_ito_check(ctx);
    if (sub == "report") return cmd_report(ctx);
    std::cerr << "unknown subcommand " << sub << "\n";
    return 2;
  } catch (const pb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
