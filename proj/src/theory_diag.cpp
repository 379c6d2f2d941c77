#include "metalqr/theory_diag.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

namespace metalqr {

namespace {

double spectral_norm(const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  return m.jacobiSvd().singularValues()(0);
}

double sigma_min_sym(const Matrix& m) { return min_eigenvalue_sym(m); }

}  // namespace

std::vector<bool> check_maml_stabilizing(const TaskSet& tasks, const Matrix& K,
                                         double eta) {
  std::vector<bool> out(tasks.size(), false);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!is_stable(tasks[i], K)) continue;
    out[i] = is_stable(tasks[i], K - eta * exact_gradient(tasks[i], K));
  }
  return out;
}

namespace {

double graddom_with_mu(const LqrTask& task, double mu) {
  DareSolution sol = solve_dare(task.A(), task.B(), task.Q(), task.R());
  PolicyEvaluation ev = evaluate_policy(task, sol.K_star);
  const double sigma_star_norm = spectral_norm(ev.Sigma);
  return mu * mu * sigma_min_sym(task.R()) / sigma_star_norm;
}

}  // namespace

double gradient_domination_constant(const LqrTask& task) {
  return graddom_with_mu(task, sigma_min_sym(task.Sigma0()));
}

double gradient_domination_constant_psi(const LqrTask& task) {
  return graddom_with_mu(task, sigma_min_sym(task.Psi()));
}

double trust_radius(const TaskSet& tasks, const Matrix& K) {
  double qmin = std::numeric_limits<double>::infinity();
  double bmax = 0, jmax = 0, fmax = 0;
  double mu = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const LqrTask& t = tasks[i];
    if (!is_stable(t, K))
      throw InstabilityError("trust_radius: K unstable for task " +
                             std::to_string(i));
    qmin = std::min(qmin, sigma_min_sym(t.Q()));
    bmax = std::max(bmax, spectral_norm(t.B()));
    jmax = std::max(jmax, exact_cost(t, K));
    fmax = std::max(fmax, spectral_norm(t.A() - t.B() * K));
    mu = std::min(mu, sigma_min_sym(t.Sigma0()));
  }
  return qmin * mu / (4.0 * bmax * jmax * (fmax + 1.0));
}

long bernstein_sample_size(long dim1, long dim2, double variance_proxy,
                           double range_proxy, double epsilon, double delta) {
  if (dim1 < 1 || dim2 < 1) throw ArgumentError("bernstein_sample_size: bad dims");
  if (!(epsilon > 0 && epsilon < 1) || !(delta > 0 && delta < 1))
    throw ArgumentError("bernstein_sample_size: epsilon, delta must be in (0,1)");
  if (!(variance_proxy > 0) || !(range_proxy > 0))
    throw ArgumentError("bernstein_sample_size: proxies must be positive");
  const double dmin = double(std::min(dim1, dim2));
  const double rhs = (2.0 * dmin / (epsilon * epsilon)) *
                     (variance_proxy + range_proxy * epsilon / (3.0 * std::sqrt(dmin))) *
                     std::log(double(dim1 + dim2) / delta);
  return long(std::ceil(rhs));
}

long rollout_length_bound(const TaskSet& tasks, const Matrix& K, double epsilon) {
  if (!(epsilon > 0)) throw ArgumentError("rollout_length_bound: epsilon must be > 0");
  const double d = double(tasks.state_dim());
  double jmax = 0, qnorm_max = 0, rnorm_max = 0, qmin = std::numeric_limits<double>::infinity();
  double mu = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const LqrTask& t = tasks[i];
    if (!is_stable(t, K))
      throw InstabilityError("rollout_length_bound: K unstable for task " +
                             std::to_string(i));
    jmax = std::max(jmax, exact_cost(t, K));
    qnorm_max = std::max(qnorm_max, spectral_norm(t.Q()));
    rnorm_max = std::max(rnorm_max, spectral_norm(t.R()));
    qmin = std::min(qmin, sigma_min_sym(t.Q()));
    mu = std::min(mu, sigma_min_sym(t.Sigma0()));
  }
  const double knorm = spectral_norm(K);
  const double rhs = d * jmax * jmax * (qnorm_max + rnorm_max * knorm * knorm) /
                     (epsilon * mu * qmin * qmin);
  return std::max(1L, long(std::ceil(rhs)));
}

long rollout_length_bound(const LqrTask& task, const Matrix& K, double epsilon) {
  return rollout_length_bound(TaskSet({task}), K, epsilon);
}

DiagnosticsReport diagnose(const TaskSet& tasks, const Matrix& K, double eta,
                           const Matrix& K0, double gamma) {
  DiagnosticsReport report;
  report.per_task.resize(tasks.size());
  bool all_stable = true;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    TaskDiagnostics& diag = report.per_task[i];
    const LqrTask& t = tasks[i];
    diag.stable = is_stable(t, K);
    if (!diag.stable) { all_stable = false; continue; }
    diag.maml_stabilizing = is_stable(t, K - eta * exact_gradient(t, K));
    diag.lambda = gradient_domination_constant(t);
    diag.lambda_psi = gradient_domination_constant_psi(t);
    DareSolution sol = solve_dare(t.A(), t.B(), t.Q(), t.R());
    const double jstar = exact_cost(t, sol.K_star);
    const double gap = exact_cost(t, K) - jstar;
    const double delta0 = exact_cost(t, K0) - jstar;
    diag.sublevel_margin = gamma * delta0 - gap;
    const double grad_sq = exact_gradient(t, K).squaredNorm();
    diag.graddom_satisfied =
        gap <= grad_sq / diag.lambda + 1e-9 * (1.0 + gap) ||
        gap <= grad_sq / diag.lambda_psi + 1e-9 * (1.0 + gap);
  }
  if (all_stable) report.trust_radius = trust_radius(tasks, K);
  return report;
}

}  // namespace metalqr
