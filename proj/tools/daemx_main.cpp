// daemx: minimax (worst-case) state estimation for linear descriptor systems.
//
// Subcommands:
//   simulate      generate ground truth + bounded non-Gaussian observations
//   estimate      run the optimal and/or regularized recursive filters
//   observability sweep sigma_hat(eps) and classify a direction
//   selftest      run the built-in consistency checks

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "daemx/daemx.hpp"

namespace fs = std::filesystem;
using namespace daemx;

namespace {

struct CommonOpts {
  std::string model = "example23";
  std::string config_path;
  std::size_t steps = 0;  // 0 = model default
  std::string eps_list = "1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8";
  std::string ell_list = "1,0";
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--model", o.model, "builtin model name (example23, example23-blind)");
  cmd->add_option("--config", o.config_path, "JSON model config path (overrides --model)");
  cmd->add_option("--steps", o.steps, "grid steps override");
  cmd->add_option("--eps", o.eps_list, "comma-separated regularization sweep");
  cmd->add_option("--ell", o.ell_list, "comma-separated estimation direction");
  cmd->add_option("--seed", o.seed, "noise seed");
  cmd->add_option("--out", o.out_dir, "output directory (env DAEMX_OUT overrides)");
  cmd->add_flag("--quiet", o.quiet, "suppress informational output");
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

std::string resolve_out(const CommonOpts& o) {
  if (const char* env = std::getenv("DAEMX_OUT"); env && *env) return env;
  return o.out_dir;
}

DaeModel build_model(const CommonOpts& o) {
  if (!o.config_path.empty()) return load_model_config(o.config_path, o.steps);
  const std::size_t steps = o.steps > 0 ? o.steps : 2000;
  if (o.model == "example23") return make_example23(steps);
  if (o.model == "example23-blind") return make_example23(steps, 2.0, /*blind=*/true);
  throw std::invalid_argument("unknown builtin model: " + o.model);
}

DaeModel build_validated_model(const CommonOpts& o) {
  DaeModel model = build_model(o);
  const ValidationReport rep = validate_model(model);
  if (!rep.ok()) throw std::invalid_argument("model validation failed:\n" + rep.summary());
  return model;
}

std::string eps_label(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0e", eps);
  return buf;
}

bool is_identity(const Eigen::MatrixXd& F) {
  return F.rows() == F.cols() &&
         (F - Eigen::MatrixXd::Identity(F.rows(), F.cols())).norm() <= 1e-12;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const CommonOpts& o, const std::string& noise_kind_name) {
  const std::string out = resolve_out(o);
  fs::create_directories(out);
  const NoiseKind kind =
      noise_kind_name == "bimodal" ? NoiseKind::truncated_bimodal : NoiseKind::uniform;

  if (o.config_path.empty()) {
    // builtin singular-pencil example
    ExampleConfig cfg = ExampleConfig::with_horizon(2.0, o.steps > 0 ? o.steps : 2000);
    cfg.noise_seed = o.seed;
    cfg.noise_kind = kind;
    DaeModel model = make_example23(cfg.n_steps, cfg.T);
    const ValidationReport vr = validate_model(model);
    if (!vr.ok()) {
      std::cerr << "model validation failed:\n" << vr.summary();
      return 1;
    }
    const SimulationResult sim = simulate_example(cfg);
    const Trajectory eta = generate_noise(sim.x1.grid, model.R, cfg.noise_seed, kind);
    const Trajectory y = observe(sim.y_clean, eta);

    std::vector<double> weta(eta.grid.n_nodes());
    for (std::size_t k = 0; k < weta.size(); ++k) {
      const Eigen::VectorXd e = eta.values[k];
      weta[k] = e.dot(model.R(eta.grid.node(k)) * e);
    }
    const double noise_budget = quadrature(eta.grid, weta);

    CsvWriter w(out + "/simulation.csv", {"t", "x1", "x2", "f2", "y_clean", "eta", "y"});
    for (std::size_t k = 0; k < sim.x1.grid.n_nodes(); ++k)
      w.row({sim.x1.grid.node(k), sim.x1.values[k](0), sim.x2.values[k](0),
             sim.f2.values[k](0), sim.y_clean.values[k](0), eta.values[k](0), y.values[k](0)});
    if (!o.quiet) {
      std::cout << "wrote " << out << "/simulation.csv (" << sim.x1.grid.n_nodes() << " rows)\n"
                << "constraint residual (relative): " << sim.constraint_residual_rel << "\n"
                << "input-bound usage:  " << sim.f_budget_used << " (<= 1)\n"
                << "noise-bound usage:  " << noise_budget << " (realization)\n";
    }
    std::cout << "RUN simulate ok steps=" << sim.x1.grid.n_steps() << " seed=" << o.seed << "\n";
    return 0;
  }

  // config-file model: ground truth only for square full-rank F = I
  DaeModel model = build_validated_model(o);
  if (!is_identity(model.F)) {
    std::cerr << "simulate supports configs with F = I only (got a general F)\n";
    return 1;
  }
  const TimeGrid& grid = model.grid;
  const Eigen::Index n = model.n();
  // admissible smooth input: low-frequency modes scaled into the Q-ball
  std::mt19937_64 eng(o.seed);
  auto urand = [&eng]() { return 2.0 * (static_cast<double>(eng() >> 11) * 0x1.0p-53) - 1.0; };
  std::vector<Eigen::VectorXd> amp(3, Eigen::VectorXd(n));
  for (auto& a : amp)
    for (Eigen::Index i = 0; i < n; ++i) a(i) = urand();
  auto f_raw = [&](double t) {
    const double s = (t - grid.t0()) / (grid.t_end() - grid.t0());
    return Eigen::VectorXd(amp[0] * std::sin(M_PI * s) + amp[1] * std::sin(2 * M_PI * s) +
                           amp[2] * s * (1.0 - s));
  };
  std::vector<double> wf(grid.n_nodes());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const double t = grid.node(k);
    const Eigen::VectorXd f = f_raw(t);
    wf[k] = f.dot(model.Q(t) * f);
  }
  const double budget = quadrature(grid, wf);
  const double scale = budget > 0.95 ? std::sqrt(0.95 / budget) : 1.0;

  Trajectory x = integrate_linear(
      [&](double t, Eigen::MatrixXd& A, Eigen::VectorXd& g) {
        A = model.C(t);
        g = scale * f_raw(t);
      },
      grid, IntegrationDirection::forward, Eigen::VectorXd::Zero(n), "x");
  Trajectory y_clean{grid, std::vector<Eigen::VectorXd>(grid.n_nodes()), "y_clean"};
  for (std::size_t k = 0; k < grid.n_nodes(); ++k)
    y_clean.values[k] = model.H(grid.node(k)) * x.values[k];
  const Trajectory eta = generate_noise(grid, model.R, o.seed, kind);
  const Trajectory y = observe(y_clean, eta);

  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < model.p(); ++i) header.push_back("y_clean" + std::to_string(i));
  for (Eigen::Index i = 0; i < model.p(); ++i) header.push_back("eta" + std::to_string(i));
  for (Eigen::Index i = 0; i < model.p(); ++i) header.push_back("y" + std::to_string(i));
  CsvWriter w(out + "/simulation.csv", header);
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    std::vector<double> row{grid.node(k)};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(x.values[k](i));
    for (Eigen::Index i = 0; i < model.p(); ++i) row.push_back(y_clean.values[k](i));
    for (Eigen::Index i = 0; i < model.p(); ++i) row.push_back(eta.values[k](i));
    for (Eigen::Index i = 0; i < model.p(); ++i) row.push_back(y.values[k](i));
    w.row(row);
  }
  if (!o.quiet)
    std::cout << "wrote " << out << "/simulation.csv; input-bound usage " << scale * scale * budget
              << "\n";
  std::cout << "RUN simulate ok steps=" << grid.n_steps() << " seed=" << o.seed << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

Trajectory read_observations(const std::string& path, const TimeGrid& grid, Eigen::Index p) {
  const CsvTable table = read_csv(path);
  if (table.rows.size() != grid.n_nodes())
    throw std::runtime_error("observation CSV rows (" + std::to_string(table.rows.size()) +
                             ") do not match the grid (" + std::to_string(grid.n_nodes()) + ")");
  std::vector<std::ptrdiff_t> ycols;
  if (p == 1 && table.column("y") >= 0) {
    ycols.push_back(table.column("y"));
  } else {
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto c = table.column("y" + std::to_string(i));
      if (c < 0) throw std::runtime_error("observation CSV lacks column y" + std::to_string(i));
      ycols.push_back(c);
    }
  }
  Trajectory y{grid, std::vector<Eigen::VectorXd>(grid.n_nodes()), "y"};
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    Eigen::VectorXd v(p);
    for (Eigen::Index i = 0; i < p; ++i) v(i) = table.rows[k][ycols[i]];
    y.values[k] = v;
  }
  return y;
}

void write_estimate_csv(const std::string& path, const EstimateReport& rep,
                        const std::vector<double>& sigma_traj) {
  const Eigen::Index r = rep.xhat.dim();
  std::vector<std::string> header{"t"};
  if (r == 1) {
    header.insert(header.end(), {"xhat", "K", "sigma_hat"});
  } else {
    for (Eigen::Index i = 0; i < r; ++i) header.push_back("xhat_" + std::to_string(i));
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j)
        header.push_back("K_" + std::to_string(i) + std::to_string(j));
    header.push_back("sigma_hat");
  }
  CsvWriter w(path, header);
  for (std::size_t k = 0; k < rep.xhat.grid.n_nodes(); ++k) {
    std::vector<double> row{rep.xhat.grid.node(k)};
    for (Eigen::Index i = 0; i < r; ++i) row.push_back(rep.xhat.values[k](i));
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j) row.push_back(rep.K.K[k](i, j));
    row.push_back(sigma_traj[k]);
    w.row(row);
  }
}

int cmd_estimate(const CommonOpts& o) {
  const std::string out = resolve_out(o);
  const std::string obs_path = out + "/simulation.csv";
  if (!fs::exists(obs_path)) {
    std::cerr << "missing observation file: " << obs_path << " (run `daemx simulate` first)\n";
    return 2;
  }
  DaeModel model = build_validated_model(o);
  const CanonicalModel cm = canonicalize(model);
  const Direction ell{Eigen::Map<const Eigen::VectorXd>(parse_list(o.ell_list).data(),
                                                        static_cast<Eigen::Index>(
                                                            parse_list(o.ell_list).size()))};
  if (ell.ell.size() != model.n()) {
    std::cerr << "--ell must have length n=" << model.n() << "\n";
    return 1;
  }
  const Trajectory y = read_observations(obs_path, model.grid, model.p());
  const std::vector<double> eps_list = parse_list(o.eps_list);

  bool all_ok = true;
  std::optional<EstimateReport> opt_rep;
  try {
    opt_rep = optimal_filter(cm, y, ell);
    write_estimate_csv(out + "/estimate_opt.csv", *opt_rep,
                       optimal_sigma_trajectory(*opt_rep, cm, ell));
    std::cout << "RUN estimate-optimal ok estimate=" << format_full(opt_rep->estimate_value)
              << " sigma=" << format_full(opt_rep->sigma_hat) << "\n";
  } catch (const std::exception& e) {
    std::cout << "RUN estimate-optimal skipped reason=\"" << e.what() << "\"\n";
    if (!o.quiet)
      std::cerr << "warning: optimal filter unavailable, running suboptimal only (" << e.what()
                << ")\n";
  }

  std::vector<std::optional<EstimateReport>> sub_reps(eps_list.size());
  std::vector<std::string> sub_errors(eps_list.size());
  std::vector<std::future<void>> futs;
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    futs.push_back(std::async(std::launch::async, [&, i]() {
      try {
        sub_reps[i] = suboptimal_filter(cm, y, ell, eps_list[i]);
      } catch (const std::exception& e) {
        sub_errors[i] = e.what();
      }
    }));
  }
  for (auto& f : futs) f.get();

  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!sub_reps[i]) {
      all_ok = false;
      std::cout << "RUN estimate-sub-" << eps_label(eps_list[i]) << " fail reason=\""
                << sub_errors[i] << "\"\n";
      continue;
    }
    write_estimate_csv(out + "/estimate_sub_" + eps_label(eps_list[i]) + ".csv", *sub_reps[i],
                       suboptimal_sigma_trajectory(cm, ell, eps_list[i]));
    std::cout << "RUN estimate-sub-" << eps_label(eps_list[i])
              << " ok estimate=" << format_full(sub_reps[i]->estimate_value)
              << " sigma=" << format_full(sub_reps[i]->sigma_hat) << "\n";
  }

  // comparison file: optimal vs suboptimal trajectories; the truth column is
  // meaningful only for the builtin model (identity reduction, xhat estimates x1)
  const CsvTable sim_table = read_csv(obs_path);
  const auto x1col = o.config_path.empty() ? sim_table.column("x1") : -1;
  const Eigen::Index r = cm.r();
  std::vector<std::string> header{"t"};
  auto push_traj_headers = [&](const std::string& base) {
    if (r == 1)
      header.push_back(base);
    else
      for (Eigen::Index i = 0; i < r; ++i) header.push_back(base + "_" + std::to_string(i));
  };
  if (opt_rep) push_traj_headers("xhat_opt");
  for (std::size_t i = 0; i < eps_list.size(); ++i)
    if (sub_reps[i]) push_traj_headers("xhat_sub_" + eps_label(eps_list[i]));
  if (x1col >= 0) header.push_back("x1_true");
  CsvWriter cmp(out + "/comparison.csv", header);
  for (std::size_t k = 0; k < model.grid.n_nodes(); ++k) {
    std::vector<double> row{model.grid.node(k)};
    if (opt_rep)
      for (Eigen::Index i = 0; i < r; ++i) row.push_back(opt_rep->xhat.values[k](i));
    for (std::size_t i = 0; i < eps_list.size(); ++i)
      if (sub_reps[i])
        for (Eigen::Index j = 0; j < r; ++j) row.push_back(sub_reps[i]->xhat.values[k](j));
    if (x1col >= 0) row.push_back(sim_table.rows[k][x1col]);
    cmp.row(row);
  }
  if (!o.quiet) std::cout << "wrote " << out << "/comparison.csv\n";
  return all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// observability
// ---------------------------------------------------------------------------

int cmd_observability(const CommonOpts& o) {
  const std::string out = resolve_out(o);
  fs::create_directories(out);
  DaeModel model = build_validated_model(o);
  const CanonicalModel cm = canonicalize(model);
  const std::vector<double> ell_vals = parse_list(o.ell_list);
  if (static_cast<Eigen::Index>(ell_vals.size()) != model.n()) {
    std::cerr << "--ell must have length n=" << model.n() << "\n";
    return 1;
  }
  const Direction ell{Eigen::Map<const Eigen::VectorXd>(
      ell_vals.data(), static_cast<Eigen::Index>(ell_vals.size()))};

  const ObservabilityReport rep = worst_case_error_limit(cm, ell, parse_list(o.eps_list));

  CsvWriter w(out + "/observability.csv", {"eps", "sigma_hat"});
  for (const auto& [eps, sig] : rep.eps_sweep) w.row({eps, sig});
  {
    std::ofstream vf(out + "/observability_verdict.txt");
    vf << "verdict: " << to_string(rep.verdict) << "\n"
       << "sigma_min_over_sweep: " << format_full(rep.sigma_min) << "\n"
       << "sigma_last: " << format_full(rep.sigma_last) << "\n"
       << "rationale: " << rep.rationale << "\n";
    for (const auto& f : rep.failures) vf << "failure: " << f << "\n";
  }
  std::cout << "RUN observability ok verdict=" << to_string(rep.verdict) << "\n";
  if (!o.quiet) std::cout << rep.rationale << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int cmd_selftest(bool quiet) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "PASS " : "FAIL ") << name;
    if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };

  try {
    // factorization of a rectangular rank-2 F (third row = sum of the first two)
    Eigen::MatrixXd F(3, 4);
    F << 1, 2, 0, 1, 0, 1, 1, 0, 1, 3, 1, 1;
    const SvdReduction red = svd_reduce(F);
    const double recon = (red.S_L * red.Lambda * red.S_R - F).norm();
    check("canonical-reconstruction", recon <= 1e-10 * std::max(1.0, F.norm()));

    TimeGrid grid(0.0, 1.0, 1000);
    const RiccatiSolution K = integrate_riccati(
        [](double) {
          return RiccatiCoeffs{Eigen::MatrixXd::Constant(1, 1, 1.0),
                               Eigen::MatrixXd::Constant(1, 1, 1.0),
                               Eigen::MatrixXd::Constant(1, 1, 3.0)};
        },
        grid);
    const double u = std::exp(-4.0);
    const double K1 = 3.0 * (1.0 - u) / (3.0 + u);
    check("riccati-closed-form", std::abs(K.K.back()(0, 0) - K1) <= 1e-8);

    // oracle equivalence on the builtin model (coarse, fast)
    DaeModel model = make_example23(400);
    const CanonicalModel cm = canonicalize(model);
    const Direction ell{Eigen::Vector2d(1.0, 0.0)};
    const TimeGrid fine = model.grid.refined(2);
    Trajectory y{fine, std::vector<Eigen::VectorXd>(fine.n_nodes()), "y"};
    for (std::size_t k = 0; k < fine.n_nodes(); ++k) {
      const double t = fine.node(k);
      const double w = std::sin(M_PI * t / 2.0);
      y.values[k] = Eigen::VectorXd::Constant(1, w * w * (0.8 + 0.3 * std::cos(M_PI * t / 2.0)));
    }
    const EstimateReport sub = suboptimal_filter(cm, y, ell, 1e-2);
    const BvpSolution bvp = solve_regularized_bvp(cm, ell, 1e-2);
    const double est_bvp = pairing_estimate(y, bvp);
    check("oracle-equivalence",
          std::abs(sub.estimate_value - est_bvp) <= 1e-5 * std::max(1.0, std::abs(est_bvp)),
          "filter=" + format_full(sub.estimate_value) + " bvp=" + format_full(est_bvp));

    // integration-by-parts identity
    Eigen::MatrixXd F2(2, 2);
    F2 << 1, 0, 0, 0;
    TimeGrid g2(0.0, 1.0, 2000);
    Trajectory xs{g2, std::vector<Eigen::VectorXd>(g2.n_nodes()), "x"};
    Trajectory ws{g2, std::vector<Eigen::VectorXd>(g2.n_nodes()), "w"};
    for (std::size_t k = 0; k < g2.n_nodes(); ++k) {
      const double t = g2.node(k);
      xs.values[k] = Eigen::Vector2d(std::sin(t), std::cos(t));
      ws.values[k] = Eigen::Vector2d(t * t, 1.0);
    }
    check("integration-by-parts", ibp_residual(F2, xs, ws, g2) <= 1e-5);
  } catch (const std::exception& e) {
    check("selftest-run", false, e.what());
  }

  if (!quiet) std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"daemx: recursive minimax state estimation for linear descriptor (DAE) systems"};
  app.require_subcommand(1);

  CommonOpts o_sim, o_est, o_obs;
  std::string noise_kind = "uniform";
  bool st_quiet = false;

  CLI::App* sim = app.add_subcommand("simulate", "generate ground truth and observations");
  add_common(sim, o_sim);
  sim->add_option("--noise", noise_kind, "noise kind: uniform | bimodal");

  CLI::App* est = app.add_subcommand("estimate", "run the minimax filters on observations");
  add_common(est, o_est);

  CLI::App* obs = app.add_subcommand("observability", "sweep sigma_hat(eps) for a direction");
  add_common(obs, o_obs);

  CLI::App* st = app.add_subcommand("selftest", "run built-in consistency checks");
  st->add_flag("--quiet", st_quiet, "suppress informational output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(o_sim, noise_kind);
    if (est->parsed()) return cmd_estimate(o_est);
    if (obs->parsed()) return cmd_observability(o_obs);
    if (st->parsed()) return cmd_selftest(st_quiet);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
