#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "metalqr/rollout_sim.hpp"

namespace metalqr {

struct SmoothingParams {
  double radius = 0.05;        // r
  long num_perturbations = 100;  // M
  long horizon = 50;           // l

  void validate() const {
    if (!(radius > 0)) throw ArgumentError("SmoothingParams: radius must be > 0");
    if (num_perturbations < 1)
      throw ArgumentError("SmoothingParams: num_perturbations must be >= 1");
    if (horizon < 1) throw ArgumentError("SmoothingParams: horizon must be >= 1");
  }
};

struct MetaConfig {
  double adaptation_rate = 1e-5;  // eta
  double learning_rate = 1e-3;    // alpha
  SmoothingParams smoothing;
  // Inner-loop M for the one-step adaptation inside the meta estimator;
  // 0 means "same as smoothing.num_perturbations".
  long inner_num_perturbations = 0;
  long task_batch_size = 5;
  long max_iterations = 1000;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  // Draw perturbations in +/- pairs. Keeps each U_m uniform on the sphere
  // while cancelling the J(K)*U/r^2 variance term.
  bool antithetic = true;
  // Per-iteration MAML-stabilizing checks via the exact oracles.
  bool check_stability = true;
  // Fill GradientReport::exact_error from the exact oracles when possible.
  bool report_exact_error = false;

  long effective_inner_m() const {
    return inner_num_perturbations > 0 ? inner_num_perturbations
                                       : smoothing.num_perturbations;
  }

  void validate() const {
    if (!(adaptation_rate > 0)) throw ArgumentError("MetaConfig: adaptation_rate must be > 0");
    if (!(learning_rate > 0)) throw ArgumentError("MetaConfig: learning_rate must be > 0");
    smoothing.validate();
    if (task_batch_size < 1) throw ArgumentError("MetaConfig: task_batch_size must be >= 1");
    if (max_iterations < 0) throw ArgumentError("MetaConfig: max_iterations must be >= 0");
    if (tolerance < 0) throw ArgumentError("MetaConfig: tolerance must be >= 0");
  }
};

enum class GradientMethod { ZerothOrder, Exact };

struct GradientReport {
  Matrix estimate;
  GradientMethod method = GradientMethod::ZerothOrder;
  long samples_used = 0;
  std::optional<double> exact_error;  // ||estimate - exact||_F when evaluable
};

struct TraceRow {
  long iteration = 0;
  Matrix policy;
  double meta_grad_norm = 0;     // NaN on the final row when no step was taken
  std::vector<double> task_gaps;  // J_i(K_n) - J_i(K*_i)
  double ratio = 0;               // sum gaps / sum J_i(K*_i)
  bool maml_stabilizing = true;
  double wall_secs = 0;
};

struct LearningTrace {
  std::vector<TraceRow> rows;
  std::vector<double> optimal_costs;  // J_i(K*_i)
  long stability_violations = 0;
};

// Injectable cost evaluator: returns an estimate (or exact value) of J(K).
using CostOracle = std::function<double(const LqrTask&, const Matrix& K,
                                        long horizon, RngStream& rng)>;

CostOracle rollout_cost_oracle();
CostOracle exact_cost_oracle();  // ignores horizon and rng; throws on unstable K

// Uniform draw from the Frobenius sphere of the given radius.
Matrix sample_sphere(Eigen::Index rows, Eigen::Index cols, double radius,
                     RngStream& rng);

// Algorithm: average of (dk/r^2) * J~(K + U_m) * U_m over M perturbations.
// `key` identifies the (experiment, task, iteration) slot; per-m streams are
// derived from it.
GradientReport estimate_gradient(const LqrTask& task, const Matrix& K,
                                 const SmoothingParams& p, const StreamKey& key,
                                 const CostOracle& oracle = rollout_cost_oracle(),
                                 bool antithetic = true,
                                 bool compute_exact_error = false);

// Hessian-free meta-gradient estimator: per (task, m), perturb, one-step
// adapt with an inner zeroth-order gradient, roll out the adapted gain.
GradientReport estimate_meta_gradient(const TaskSet& tasks, const Matrix& K,
                                      const MetaConfig& cfg, std::uint64_t iteration,
                                      const CostOracle& oracle = rollout_cost_oracle());

enum class OptimizationMode { ZerothOrder, ExactOracle };

// Outer loop: K_{n+1} = K_n - alpha * grad~L(K_n), with per-iteration
// bookkeeping of optimality gaps and the average cost difference ratio.
// `on_row`, when set, sees each TraceRow as soon as it is recorded, so
// callers can persist partial traces even if a later iteration throws.
LearningTrace run_meta_optimization(const TaskSet& tasks, const Matrix& K0,
                                    const MetaConfig& cfg,
                                    OptimizationMode mode = OptimizationMode::ZerothOrder,
                                    const CostOracle& oracle = rollout_cost_oracle(),
                                    const std::function<void(const TraceRow&)>& on_row = {});

}  // namespace metalqr
