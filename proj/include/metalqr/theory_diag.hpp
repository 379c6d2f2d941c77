#pragma once

#include <vector>

#include "metalqr/lqr_core.hpp"

namespace metalqr {

struct TaskDiagnostics {
  bool stable = false;
  bool maml_stabilizing = false;
  double sublevel_margin = 0;  // gamma * Delta0 - current gap
  double lambda = 0;           // gradient-domination constant, Sigma0 floor
  double lambda_psi = 0;       // variant with mu = sigma_min(Psi)
  bool graddom_satisfied = false;
};

struct DiagnosticsReport {
  std::vector<TaskDiagnostics> per_task;
  double trust_radius = 0;  // h_Delta(K), shared across tasks
};

// Definition check: rho(A - BK) < 1 and rho(A - B(K - eta gradJ(K))) < 1
// per task, with the exact gradient.
std::vector<bool> check_maml_stabilizing(const TaskSet& tasks, const Matrix& K,
                                         double eta);

// lambda_i = mu^2 sigma_min(R) / ||Sigma_{K*}||, mu = sigma_min(Sigma0).
double gradient_domination_constant(const LqrTask& task);

// Variant with mu = sigma_min(Psi), the stationary-covariance floor.
double gradient_domination_constant_psi(const LqrTask& task);

// h_Delta(K) = sigma_min(Q) mu / (4 ||B||_max J_max(K) (||A-BK||_max + 1)),
// spectral norms, min over tasks of sigma_min(Q_i), max over tasks elsewhere.
double trust_radius(const TaskSet& tasks, const Matrix& K);

// Smallest m satisfying the matrix Bernstein bound
// m >= (2 min(d1,d2)/eps^2)(sigma^2 + B eps/(3 sqrt(min(d1,d2)))) log((d1+d2)/delta).
long bernstein_sample_size(long dim1, long dim2, double variance_proxy,
                           double range_proxy, double epsilon, double delta);

// Smallest l with l >= d J_max^2(K)(||Q||_max + ||R||_max ||K||_max^2)
//                      / (eps mu sigma_min^2(Q)).
long rollout_length_bound(const TaskSet& tasks, const Matrix& K, double epsilon);
long rollout_length_bound(const LqrTask& task, const Matrix& K, double epsilon);

// Full per-task report at K, relative to the initial gain K0 and sub-level
// slack factor gamma.
DiagnosticsReport diagnose(const TaskSet& tasks, const Matrix& K, double eta,
                           const Matrix& K0, double gamma = 1.0);

}  // namespace metalqr
