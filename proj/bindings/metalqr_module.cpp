#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "metalqr/io.hpp"

namespace py = pybind11;
using namespace metalqr;

namespace {

RngStream make_stream(std::uint64_t seed, RngPurpose purpose) {
  return RngStream(StreamKey{seed, 0, 0, 0, purpose});
}

}  // namespace

PYBIND11_MODULE(_metalqr, m) {
  m.doc() = "Zeroth-order meta-policy optimization over ergodic LQR task sets";

  py::register_exception<Error>(m, "MetalqrError", PyExc_RuntimeError);

  py::class_<LqrTask>(m, "LqrTask")
      .def(py::init<Matrix, Matrix, Matrix, Matrix, Matrix, Matrix>(),
           py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"), py::arg("Psi"),
           py::arg("Sigma0"))
      .def_property_readonly("A", &LqrTask::A)
      .def_property_readonly("B", &LqrTask::B)
      .def_property_readonly("Q", &LqrTask::Q)
      .def_property_readonly("R", &LqrTask::R)
      .def_property_readonly("Psi", &LqrTask::Psi)
      .def_property_readonly("Sigma0", &LqrTask::Sigma0)
      .def_property_readonly("state_dim", &LqrTask::state_dim)
      .def_property_readonly("control_dim", &LqrTask::control_dim);

  py::class_<TaskSet>(m, "TaskSet")
      .def(py::init<std::vector<LqrTask>, std::vector<double>>(), py::arg("tasks"),
           py::arg("weights"))
      .def(py::init<std::vector<LqrTask>>(), py::arg("tasks"))
      .def("__len__", &TaskSet::size)
      .def("__getitem__",
           [](const TaskSet& s, std::size_t i) {
             if (i >= s.size()) throw py::index_error();
             return s[i];
           })
      .def_property_readonly("weights", &TaskSet::weights)
      .def_property_readonly("state_dim", &TaskSet::state_dim)
      .def_property_readonly("control_dim", &TaskSet::control_dim);

  py::class_<DareSolution>(m, "DareSolution")
      .def_readonly("P", &DareSolution::P)
      .def_readonly("K_star", &DareSolution::K_star);

  py::class_<PolicyEvaluation>(m, "PolicyEvaluation")
      .def_readonly("P", &PolicyEvaluation::P)
      .def_readonly("Sigma", &PolicyEvaluation::Sigma)
      .def_readonly("E", &PolicyEvaluation::E)
      .def_readonly("cost", &PolicyEvaluation::cost);

  py::enum_<UpdateRule>(m, "UpdateRule")
      .value("GD", UpdateRule::GD)
      .value("NaturalGD", UpdateRule::NaturalGD)
      .value("GaussNewton", UpdateRule::GaussNewton);

  py::enum_<OptimizationMode>(m, "OptimizationMode")
      .value("ZerothOrder", OptimizationMode::ZerothOrder)
      .value("ExactOracle", OptimizationMode::ExactOracle);

  m.def("spectral_radius", &spectral_radius, py::arg("m"));
  m.def("solve_discrete_lyapunov",
        [](const Matrix& F, const Matrix& W) { return solve_discrete_lyapunov(F, W); },
        py::arg("F"), py::arg("W"));
  m.def("solve_dare",
        [](const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
          return solve_dare(A, B, Q, R);
        },
        py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"));

  m.def("is_stable", &is_stable, py::arg("task"), py::arg("K"));
  m.def("evaluate_policy",
        [](const LqrTask& t, const Matrix& K) { return evaluate_policy(t, K); },
        py::arg("task"), py::arg("K"));
  m.def("exact_cost", &exact_cost, py::arg("task"), py::arg("K"));
  m.def("exact_gradient", &exact_gradient, py::arg("task"), py::arg("K"));
  m.def("exact_hessian_action", &exact_hessian_action, py::arg("task"), py::arg("K"),
        py::arg("X"));
  m.def("meta_objective", &meta_objective, py::arg("tasks"), py::arg("K"),
        py::arg("eta"));
  m.def("exact_meta_gradient", &exact_meta_gradient, py::arg("tasks"), py::arg("K"),
        py::arg("eta"));
  m.def("policy_update", &policy_update, py::arg("task"), py::arg("K"),
        py::arg("step"), py::arg("rule") = UpdateRule::GD);

  m.def("rollout_cost",
        [](const LqrTask& t, const Matrix& K, long horizon, std::uint64_t seed) {
          RngStream rng = make_stream(seed, RngPurpose::RolloutNoise);
          return rollout_cost(t, K, horizon, rng);
        },
        py::arg("task"), py::arg("K"), py::arg("horizon"), py::arg("seed"));
  m.def("expected_finite_horizon_cost", &expected_finite_horizon_cost,
        py::arg("task"), py::arg("K"), py::arg("horizon"));

  py::class_<SmoothingParams>(m, "SmoothingParams")
      .def(py::init<>())
      .def_readwrite("radius", &SmoothingParams::radius)
      .def_readwrite("num_perturbations", &SmoothingParams::num_perturbations)
      .def_readwrite("horizon", &SmoothingParams::horizon);

  py::class_<MetaConfig>(m, "MetaConfig")
      .def(py::init<>())
      .def_readwrite("adaptation_rate", &MetaConfig::adaptation_rate)
      .def_readwrite("learning_rate", &MetaConfig::learning_rate)
      .def_readwrite("smoothing", &MetaConfig::smoothing)
      .def_readwrite("inner_num_perturbations", &MetaConfig::inner_num_perturbations)
      .def_readwrite("task_batch_size", &MetaConfig::task_batch_size)
      .def_readwrite("max_iterations", &MetaConfig::max_iterations)
      .def_readwrite("tolerance", &MetaConfig::tolerance)
      .def_readwrite("seed", &MetaConfig::seed)
      .def_readwrite("antithetic", &MetaConfig::antithetic)
      .def_readwrite("check_stability", &MetaConfig::check_stability)
      .def_readwrite("report_exact_error", &MetaConfig::report_exact_error);

  py::class_<GradientReport>(m, "GradientReport")
      .def_readonly("estimate", &GradientReport::estimate)
      .def_readonly("samples_used", &GradientReport::samples_used)
      .def_readonly("exact_error", &GradientReport::exact_error);

  py::class_<TraceRow>(m, "TraceRow")
      .def_readonly("iteration", &TraceRow::iteration)
      .def_readonly("policy", &TraceRow::policy)
      .def_readonly("meta_grad_norm", &TraceRow::meta_grad_norm)
      .def_readonly("task_gaps", &TraceRow::task_gaps)
      .def_readonly("ratio", &TraceRow::ratio)
      .def_readonly("maml_stabilizing", &TraceRow::maml_stabilizing)
      .def_readonly("wall_secs", &TraceRow::wall_secs);

  py::class_<LearningTrace>(m, "LearningTrace")
      .def_readonly("rows", &LearningTrace::rows)
      .def_readonly("optimal_costs", &LearningTrace::optimal_costs)
      .def_readonly("stability_violations", &LearningTrace::stability_violations);

  m.def("estimate_gradient",
        [](const LqrTask& task, const Matrix& K, const SmoothingParams& p,
           std::uint64_t seed, bool antithetic, bool compute_exact_error) {
          StreamKey key{seed, 0, 0, 0, RngPurpose::Test};
          return estimate_gradient(task, K, p, key, rollout_cost_oracle(),
                                   antithetic, compute_exact_error);
        },
        py::arg("task"), py::arg("K"), py::arg("params"), py::arg("seed"),
        py::arg("antithetic") = true, py::arg("compute_exact_error") = false);
  m.def("estimate_meta_gradient",
        [](const TaskSet& tasks, const Matrix& K, const MetaConfig& cfg,
           std::uint64_t iteration) {
          return estimate_meta_gradient(tasks, K, cfg, iteration);
        },
        py::arg("tasks"), py::arg("K"), py::arg("config"), py::arg("iteration") = 0);
  m.def("run_meta_optimization",
        [](const TaskSet& tasks, const Matrix& K0, const MetaConfig& cfg,
           OptimizationMode mode) {
          return run_meta_optimization(tasks, K0, cfg, mode);
        },
        py::arg("tasks"), py::arg("K0"), py::arg("config"),
        py::arg("mode") = OptimizationMode::ZerothOrder);

  py::class_<TaskDiagnostics>(m, "TaskDiagnostics")
      .def_readonly("stable", &TaskDiagnostics::stable)
      .def_readonly("maml_stabilizing", &TaskDiagnostics::maml_stabilizing)
      .def_readonly("sublevel_margin", &TaskDiagnostics::sublevel_margin)
      .def_readonly("lambda_", &TaskDiagnostics::lambda)
      .def_readonly("lambda_psi", &TaskDiagnostics::lambda_psi)
      .def_readonly("graddom_satisfied", &TaskDiagnostics::graddom_satisfied);

  py::class_<DiagnosticsReport>(m, "DiagnosticsReport")
      .def_readonly("per_task", &DiagnosticsReport::per_task)
      .def_readonly("trust_radius", &DiagnosticsReport::trust_radius);

  m.def("check_maml_stabilizing", &check_maml_stabilizing, py::arg("tasks"),
        py::arg("K"), py::arg("eta"));
  m.def("gradient_domination_constant", &gradient_domination_constant,
        py::arg("task"));
  m.def("trust_radius", &trust_radius, py::arg("tasks"), py::arg("K"));
  m.def("bernstein_sample_size", &bernstein_sample_size, py::arg("dim1"),
        py::arg("dim2"), py::arg("variance_proxy"), py::arg("range_proxy"),
        py::arg("epsilon"), py::arg("delta"));
  m.def("rollout_length_bound",
        py::overload_cast<const TaskSet&, const Matrix&, double>(
            &rollout_length_bound),
        py::arg("tasks"), py::arg("K"), py::arg("epsilon"));
  m.def("diagnose", &diagnose, py::arg("tasks"), py::arg("K"), py::arg("eta"),
        py::arg("K0"), py::arg("gamma") = 1.0);

  py::class_<TaskGenSpec>(m, "TaskGenSpec")
      .def(py::init<>())
      .def_readwrite("d", &TaskGenSpec::d)
      .def_readwrite("k", &TaskGenSpec::k)
      .def_readwrite("num_tasks", &TaskGenSpec::num_tasks)
      .def_readwrite("center_entry_low", &TaskGenSpec::center_entry_low)
      .def_readwrite("center_entry_high", &TaskGenSpec::center_entry_high)
      .def_readwrite("perturbation_std", &TaskGenSpec::perturbation_std)
      .def_readwrite("spectral_target", &TaskGenSpec::spectral_target)
      .def_readwrite("seed", &TaskGenSpec::seed);

  m.def("generate_tasks", &generate_tasks, py::arg("spec"), py::arg("eta") = 1e-5);
  m.def("save_task_set", &save_task_set, py::arg("tasks"), py::arg("path"));
  m.def("load_task_set", &load_task_set, py::arg("path"));
}
