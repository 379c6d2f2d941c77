#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metalqr/io.hpp"

namespace fs = std::filesystem;
using namespace metalqr;

namespace {

struct CommonOpts {
  std::string config;
  std::string preset_name;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "Config file (key = value, [section] headers)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", opts.preset_name,
                  "Named experiment preset: fig1-d1, fig1-d2, fig1-d20");
  cmd->add_option("--seed", opts.seed, "Override both task-generation and run seeds");
  cmd->add_option("--out", opts.out, "Output directory (default from config)");
  cmd->add_option("--mode", opts.mode, "Oracle mode: zeroth or exact")
      ->check(CLI::IsMember({"zeroth", "exact"}));
}

ExperimentSpec resolve_spec(const CommonOpts& opts) {
  ExperimentSpec spec;
  if (!opts.preset_name.empty()) spec = preset(opts.preset_name);
  if (!opts.config.empty()) {
    // Config entries overlay the preset (or the defaults).
    ConfigMap merged = spec.to_config();
    for (const auto& [section, entries] : parse_config_file(opts.config))
      for (const auto& [key, value] : entries) merged[section][key] = value;
    spec = ExperimentSpec::from_config(merged);
  }
  if (opts.seed) {
    spec.taskgen.seed = *opts.seed;
    spec.meta.seed = *opts.seed;
  }
  if (!opts.out.empty()) spec.outputs = opts.out;
  if (!opts.mode.empty())
    spec.mode = opts.mode == "exact" ? OptimizationMode::ExactOracle
                                     : OptimizationMode::ZerothOrder;
  return spec;
}

TaskSet obtain_tasks(const ExperimentSpec& spec) {
  if (spec.tasks_path) return load_task_set(*spec.tasks_path);
  return generate_tasks(spec.taskgen, spec.meta.adaptation_rate);
}

fs::path prepare_outputs(const ExperimentSpec& spec) {
  fs::path dir(spec.outputs);
  fs::create_directories(dir);
  return dir;
}

int cmd_gen_tasks(const CommonOpts& opts) {
  ExperimentSpec spec = resolve_spec(opts);
  TaskSet tasks = obtain_tasks(spec);
  fs::path dir = prepare_outputs(spec);
  save_task_set(tasks, (dir / "tasks.txt").string());
  write_manifest(spec, (dir / "manifest.txt").string());
  std::cout << "wrote " << tasks.size() << " tasks (d=" << tasks.state_dim()
            << ", k=" << tasks.control_dim() << ") to " << (dir / "tasks.txt").string()
            << '\n';
  return 0;
}

// Streams rows to disk as they arrive so a failed run keeps its partial trace.
class TraceWriter {
 public:
  TraceWriter(const std::string& path, std::size_t num_tasks) : os_(path) {
    if (!os_) throw Error("cannot open for writing: " + path);
    os_ << "iteration,ratio,meta_grad_norm";
    for (std::size_t i = 0; i < num_tasks; ++i) os_ << ",gap_" << i;
    os_ << ",wall_secs\n";
    os_.flush();
  }
  void write(const TraceRow& row) {
    os_ << row.iteration << ',' << format_double(row.ratio) << ','
        << format_double(row.meta_grad_norm);
    for (double g : row.task_gaps) os_ << ',' << format_double(g);
    os_ << ',' << format_double(row.wall_secs) << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

int cmd_train(const CommonOpts& opts) {
  ExperimentSpec spec = resolve_spec(opts);
  TaskSet tasks = obtain_tasks(spec);
  fs::path dir = prepare_outputs(spec);
  save_task_set(tasks, (dir / "tasks.txt").string());
  write_manifest(spec, (dir / "manifest.txt").string());

  const Matrix K0 = Matrix::Zero(tasks.control_dim(), tasks.state_dim());
  write_diagnostics(diagnose(tasks, K0, spec.meta.adaptation_rate, K0),
                    (dir / "diagnostics.txt").string());

  TraceWriter writer((dir / "trace.csv").string(), tasks.size());
  const CostOracle oracle = spec.mode == OptimizationMode::ExactOracle
                                ? exact_cost_oracle()
                                : rollout_cost_oracle();
  LearningTrace trace;
  try {
    trace = run_meta_optimization(tasks, K0, spec.meta, spec.mode, oracle,
                                  [&](const TraceRow& row) { writer.write(row); });
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n(partial trace flushed to "
              << (dir / "trace.csv").string() << ")\n";
    return 1;
  }
  const TraceRow& last = trace.rows.back();
  std::cout << "iterations: " << trace.rows.size() << '\n'
            << "initial ratio: " << format_double(trace.rows.front().ratio) << '\n'
            << "final ratio:   " << format_double(last.ratio) << '\n'
            << "final |grad|:  " << format_double(last.meta_grad_norm) << '\n'
            << "stability violations: " << trace.stability_violations << '\n'
            << "outputs: " << dir.string() << '\n';
  return 0;
}

int cmd_diag(const CommonOpts& opts) {
  ExperimentSpec spec = resolve_spec(opts);
  TaskSet tasks = obtain_tasks(spec);
  fs::path dir = prepare_outputs(spec);
  const Matrix K0 = Matrix::Zero(tasks.control_dim(), tasks.state_dim());
  DiagnosticsReport report = diagnose(tasks, K0, spec.meta.adaptation_rate, K0);
  write_diagnostics(report, (dir / "diagnostics.txt").string());
  std::cout << "trust_radius = " << format_double(report.trust_radius) << '\n';
  for (std::size_t i = 0; i < report.per_task.size(); ++i) {
    const auto& t = report.per_task[i];
    std::cout << "task " << i << ": stable=" << (t.stable ? "yes" : "no")
              << " maml_stabilizing=" << (t.maml_stabilizing ? "yes" : "no")
              << " lambda=" << format_double(t.lambda)
              << " lambda_psi=" << format_double(t.lambda_psi) << '\n';
  }
  return 0;
}

// Cross-oracle property battery over the spec's task set.
struct PropertyResult {
  std::string name;
  bool pass = false;
  double measured = 0;
  double tolerance = 0;
};

Matrix finite_difference_gradient(const LqrTask& task, const Matrix& K, double h) {
  Matrix g(K.rows(), K.cols());
  for (Eigen::Index i = 0; i < K.rows(); ++i)
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      Matrix hi = K, lo = K;
      hi(i, j) += h;
      lo(i, j) -= h;
      g(i, j) = (exact_cost(task, hi) - exact_cost(task, lo)) / (2.0 * h);
    }
  return g;
}

int cmd_verify(const CommonOpts& opts) {
  ExperimentSpec spec = resolve_spec(opts);
  TaskSet tasks = obtain_tasks(spec);
  fs::path dir = prepare_outputs(spec);
  const Matrix K0 = Matrix::Zero(tasks.control_dim(), tasks.state_dim());
  const double eta = spec.meta.adaptation_rate;

  std::vector<PropertyResult> results;
  auto record = [&](const std::string& name, double measured, double tol) {
    results.push_back({name, measured <= tol, measured, tol});
  };

  // Cost-formula consistency: Tr(P Psi) == Tr((Q + K'RK) Sigma).
  {
    double worst = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      auto ev = evaluate_policy(tasks[i], K0);
      const double lhs = (ev.P * tasks[i].Psi()).trace();
      const double rhs = ((tasks[i].Q() +
                           K0.transpose() * tasks[i].R() * K0) * ev.Sigma).trace();
      worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
    }
    record("cost_formula_consistency", worst, 1e-8);
  }

  // Exact gradient vs central finite differences.
  {
    double worst = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const Matrix g = exact_gradient(tasks[i], K0);
      const Matrix fd = finite_difference_gradient(tasks[i], K0, 1e-5);
      worst = std::max(worst, (g - fd).norm() / (1.0 + g.norm()));
    }
    record("gradient_vs_finite_difference", worst, 1e-5);
  }

  // Hessian action self-adjointness.
  {
    std::mt19937 gen(1);
    std::normal_distribution<> nd;
    double worst = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      Matrix X(K0.rows(), K0.cols()), Y(K0.rows(), K0.cols());
      for (Eigen::Index r = 0; r < X.rows(); ++r)
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
          X(r, c) = nd(gen);
          Y(r, c) = nd(gen);
        }
      const double lhs = (exact_hessian_action(tasks[i], K0, X).array() * Y.array()).sum();
      const double rhs = (X.array() * exact_hessian_action(tasks[i], K0, Y).array()).sum();
      worst = std::max(worst, std::abs(lhs - rhs) /
                                  (std::abs(lhs) + std::abs(rhs) + 1e-12));
    }
    record("hessian_self_adjoint", worst, 1e-8);
  }

  // Zeroth-order gradient estimator vs the exact gradient (exact cost oracle,
  // antithetic pairs: only the smoothing bias remains).
  {
    // Antithetic pairs with an exact oracle leave only the smoothing bias
    // and the directional variance, which shrinks like sqrt(dk/M).
    double worst = 0;
    SmoothingParams p{0.01, 8000, 1};
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      StreamKey key{spec.meta.seed, std::uint64_t(i), 0, 0, RngPurpose::Test};
      auto rep = estimate_gradient(tasks[i], K0, p, key, exact_cost_oracle(), true, false);
      const Matrix g = exact_gradient(tasks[i], K0);
      worst = std::max(worst, (rep.estimate - g).norm() / (1.0 + g.norm()));
    }
    record("zeroth_order_gradient_vs_exact", worst, 0.1);
  }

  // Meta-gradient estimator vs the exact meta-gradient.
  {
    MetaConfig cfg = spec.meta;
    cfg.smoothing = {0.01, 500, 1};
    cfg.inner_num_perturbations = 4;
    cfg.task_batch_size = long(tasks.size()) * 8;
    auto rep = estimate_meta_gradient(tasks, K0, cfg, 0, exact_cost_oracle());
    const Matrix g = exact_meta_gradient(tasks, K0, eta);
    record("meta_gradient_estimator_vs_exact",
           (rep.estimate - g).norm() / (1.0 + g.norm()), 0.15);
  }

  // Finite-horizon bias at the prescribed rollout length.
  {
    double worst = 0;
    const double eps = 0.1;
    const long bound = std::min(rollout_length_bound(tasks, K0, eps), 2000000L);
    for (std::size_t i = 0; i < tasks.size(); ++i)
      worst = std::max(worst,
                       std::abs(expected_finite_horizon_cost(tasks[i], K0, bound) -
                                exact_cost(tasks[i], K0)));
    record("finite_horizon_bias_bound", worst, eps);
  }

  // Gradient domination (sub-optimality gap vs squared gradient norm).
  {
    double worst = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      auto sol = solve_dare(tasks[i].A(), tasks[i].B(), tasks[i].Q(), tasks[i].R());
      const double gap = exact_cost(tasks[i], K0) - exact_cost(tasks[i], sol.K_star);
      const double bound = exact_gradient(tasks[i], K0).squaredNorm() /
                           gradient_domination_constant_psi(tasks[i]);
      worst = std::max(worst, (gap - bound) / (1.0 + gap));
    }
    record("gradient_domination_inequality", worst, 1e-9);
  }

  const std::string report_path = (dir / "verify.txt").string();
  std::ofstream os(report_path);
  if (!os) throw Error("cannot open for writing: " + report_path);
  bool all_pass = true;
  for (const auto& r : results) {
    const char* verdict = r.pass ? "PASS" : "FAIL";
    os << verdict << ' ' << r.name << " measured=" << format_double(r.measured)
       << " tolerance=" << format_double(r.tolerance) << '\n';
    std::cout << verdict << ' ' << r.name << " (measured "
              << format_double(r.measured) << ", tolerance "
              << format_double(r.tolerance) << ")\n";
    all_pass &= r.pass;
  }
  std::cout << "report: " << report_path << '\n';
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zeroth-order meta-policy optimization over ergodic LQR task sets"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, verify_opts, diag_opts;
  add_common(app.add_subcommand("gen-tasks", "Generate and save a task collection"),
             gen_opts);
  add_common(app.add_subcommand("train", "Run the meta-optimization experiment"),
             train_opts);
  add_common(app.add_subcommand("verify", "Run the cross-oracle property battery"),
             verify_opts);
  add_common(app.add_subcommand("diag", "Report theoretical diagnostics at K0 = 0"),
             diag_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand("gen-tasks")) return cmd_gen_tasks(gen_opts);
    if (app.got_subcommand("train")) return cmd_train(train_opts);
    if (app.got_subcommand("verify")) return cmd_verify(verify_opts);
    return cmd_diag(diag_opts);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
