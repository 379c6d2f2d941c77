#include "metalqr/lqr_core.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>
#include <string>

namespace metalqr {

namespace {

// L with L L' = S, valid for PSD S (eigenvalue square root).
Matrix psd_factor(const Matrix& S) {
  if (S.rows() == 1) return Matrix::Constant(1, 1, std::sqrt(std::max(0.0, S(0, 0))));
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

void require_finite(const Matrix& m, const char* name) {
  if (!m.allFinite())
    throw ArgumentError(std::string(name) + " has non-finite entries");
}

void check_gain_dims(const LqrTask& task, const Matrix& K, const char* where) {
  if (K.rows() != task.control_dim() || K.cols() != task.state_dim())
    throw DimensionError(std::string(where) + ": gain must be k x d");
  require_finite(K, "K");
}

}  // namespace

LqrTask::LqrTask(Matrix A, Matrix B, Matrix Q, Matrix R, Matrix Psi, Matrix Sigma0)
    : A_(std::move(A)), B_(std::move(B)), Q_(std::move(Q)), R_(std::move(R)),
      Psi_(std::move(Psi)), Sigma0_(std::move(Sigma0)) {
  const Eigen::Index d = A_.rows();
  const Eigen::Index k = B_.cols();
  if (A_.cols() != d) throw DimensionError("LqrTask: A must be square");
  if (B_.rows() != d) throw DimensionError("LqrTask: B rows must match A");
  if (Q_.rows() != d || Q_.cols() != d) throw DimensionError("LqrTask: Q must be dxd");
  if (R_.rows() != k || R_.cols() != k) throw DimensionError("LqrTask: R must be kxk");
  if (Psi_.rows() != d || Psi_.cols() != d)
    throw DimensionError("LqrTask: Psi must be dxd");
  if (Sigma0_.rows() != d || Sigma0_.cols() != d)
    throw DimensionError("LqrTask: Sigma0 must be dxd");
  require_finite(A_, "A");
  require_finite(B_, "B");
  require_symmetric(Q_, "Q");
  require_symmetric(R_, "R");
  require_symmetric(Psi_, "Psi");
  require_symmetric(Sigma0_, "Sigma0");
  if (min_eigenvalue_sym(Q_) < -1e-12)
    throw ArgumentError("LqrTask: Q must be positive semidefinite");
  if (min_eigenvalue_sym(Sigma0_) < -1e-12)
    throw ArgumentError("LqrTask: Sigma0 must be positive semidefinite");
  if (!(min_eigenvalue_sym(R_) > 0))
    throw ArgumentError("LqrTask: R must be positive definite");
  if (!(min_eigenvalue_sym(Psi_) > 0))
    throw ArgumentError("LqrTask: Psi must be positive definite");
  psi_factor_ = psd_factor(Psi_);
  sigma0_factor_ = psd_factor(Sigma0_);
}

TaskSet::TaskSet(std::vector<LqrTask> tasks, std::vector<double> weights)
    : tasks_(std::move(tasks)), weights_(std::move(weights)) {
  validate();
}

TaskSet::TaskSet(std::vector<LqrTask> tasks) : tasks_(std::move(tasks)) {
  weights_.assign(tasks_.size(), tasks_.empty() ? 0.0 : 1.0 / double(tasks_.size()));
  validate();
}

void TaskSet::validate() const {
  if (tasks_.empty()) throw ArgumentError("TaskSet: need at least one task");
  if (weights_.size() != tasks_.size())
    throw ArgumentError("TaskSet: one weight per task required");
  const Eigen::Index d = tasks_.front().state_dim();
  const Eigen::Index k = tasks_.front().control_dim();
  for (const auto& t : tasks_)
    if (t.state_dim() != d || t.control_dim() != k)
      throw DimensionError("TaskSet: all tasks must share d and k");
  double sum = 0;
  for (double w : weights_) {
    if (w < 0) throw ArgumentError("TaskSet: weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ArgumentError("TaskSet: weights must sum to 1");
}

bool is_stable(const LqrTask& task, const Matrix& K) {
  check_gain_dims(task, K, "is_stable");
  return spectral_radius(task.A() - task.B() * K) < 1.0;
}

PolicyEvaluation evaluate_policy(const LqrTask& task, const Matrix& K,
                                 const SolverOptions& opts) {
  check_gain_dims(task, K, "evaluate_policy");

  if (task.state_dim() == 1 && task.control_dim() == 1) {
    // Scalar closed forms; this path is hot in the zeroth-order oracles.
    const double a = task.A()(0, 0), b = task.B()(0, 0), q = task.Q()(0, 0),
                 r = task.R()(0, 0), psi = task.Psi()(0, 0), kk = K(0, 0);
    const double f = a - b * kk;
    if (!(std::abs(f) < 1.0))
      throw InstabilityError("evaluate_policy: unstable gain, rho = " +
                             std::to_string(std::abs(f)));
    const double denom = 1.0 - f * f;
    const double p = (q + kk * kk * r) / denom;
    const double sig = psi / denom;
    const double e = (r + b * b * p) * kk - b * p * a;
    PolicyEvaluation ev;
    ev.P = Matrix::Constant(1, 1, p);
    ev.Sigma = Matrix::Constant(1, 1, sig);
    ev.E = Matrix::Constant(1, 1, e);
    ev.cost = p * psi;
    return ev;
  }

  const Matrix F = task.A() - task.B() * K;
  const double rho = spectral_radius(F);
  if (!(rho < 1.0))
    throw InstabilityError("evaluate_policy: unstable gain, rho = " +
                           std::to_string(rho));
  const Matrix C = symmetrize(task.Q() + K.transpose() * task.R() * K);
  PolicyEvaluation ev;
  ev.P = solve_discrete_lyapunov(F.transpose(), C, opts);
  ev.Sigma = solve_discrete_lyapunov(F, task.Psi(), opts);
  ev.E = (task.R() + task.B().transpose() * ev.P * task.B()) * K -
         task.B().transpose() * ev.P * task.A();
  ev.cost = (ev.P * task.Psi()).trace();
  return ev;
}

double exact_cost(const LqrTask& task, const Matrix& K) {
  return evaluate_policy(task, K).cost;
}

Matrix exact_gradient(const LqrTask& task, const Matrix& K) {
  PolicyEvaluation ev = evaluate_policy(task, K);
  return 2.0 * ev.E * ev.Sigma;
}

Matrix exact_hessian_action(const LqrTask& task, const Matrix& K, const Matrix& X) {
  check_gain_dims(task, K, "exact_hessian_action");
  if (X.rows() != K.rows() || X.cols() != K.cols())
    throw DimensionError("exact_hessian_action: X must be k x d");
  PolicyEvaluation ev = evaluate_policy(task, K);
  const Matrix F = task.A() - task.B() * K;
  // P and Sigma sensitivities along X:
  //   Ptilde   = F' Ptilde F + X'E + E'X
  //   Sigtilde = F Sigtilde F' - (B X Sigma F' + F Sigma X'B')
  const Matrix W = symmetrize(X.transpose() * ev.E + ev.E.transpose() * X);
  const Matrix Ptilde = solve_discrete_lyapunov(F.transpose(), W);
  const Matrix M = task.B() * X * ev.Sigma * F.transpose();
  const Matrix Sigtilde = solve_discrete_lyapunov(F, -(M + M.transpose()));
  // d(gradJ)[X] = 2 dE Sigma + 2 E dSigma. Contracted against X this matches
  // the usual 2<(R+B'PB)X Sigma, X> - 4<B'Ptilde F Sigma, X> quadratic form.
  return 2.0 * (((task.R() + task.B().transpose() * ev.P * task.B()) * X -
                 task.B().transpose() * Ptilde * F) *
                ev.Sigma) +
         2.0 * ev.E * Sigtilde;
}

namespace {

std::vector<double> effective_weights(const TaskSet& tasks) {
  if (!tasks.weights().empty()) return tasks.weights();
  return std::vector<double>(tasks.size(), 1.0 / double(tasks.size()));
}

void require_stabilizing(const TaskSet& tasks, const Matrix& K, std::size_t i) {
  if (!is_stable(tasks[i], K))
    throw InstabilityError("task " + std::to_string(i) +
                           ": K itself is not stabilizing");
}

void require_adapted_stabilizing(const TaskSet& tasks, const Matrix& K, double eta,
                                 std::size_t i, const Matrix& grad) {
  if (!is_stable(tasks[i], K - eta * grad))
    throw InstabilityError("task " + std::to_string(i) +
                           ": one-step adapted gain K - eta*gradJ is not stabilizing");
}

}  // namespace

double meta_objective(const TaskSet& tasks, const Matrix& K, double eta) {
  if (eta < 0) throw ArgumentError("meta_objective: eta must be >= 0");
  const auto w = effective_weights(tasks);
  double value = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    require_stabilizing(tasks, K, i);
    Matrix g = exact_gradient(tasks[i], K);
    require_adapted_stabilizing(tasks, K, eta, i, g);
    value += w[i] * exact_cost(tasks[i], K - eta * g);
  }
  return value;
}

Matrix exact_meta_gradient(const TaskSet& tasks, const Matrix& K, double eta) {
  if (eta < 0) throw ArgumentError("exact_meta_gradient: eta must be >= 0");
  const auto w = effective_weights(tasks);
  Matrix acc = Matrix::Zero(K.rows(), K.cols());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    require_stabilizing(tasks, K, i);
    Matrix g = exact_gradient(tasks[i], K);
    require_adapted_stabilizing(tasks, K, eta, i, g);
    Matrix gp = exact_gradient(tasks[i], K - eta * g);
    // (I - eta hess) g' via the self-adjoint Hessian action.
    acc += w[i] * (gp - eta * exact_hessian_action(tasks[i], K, gp));
  }
  return acc;
}

Matrix policy_update(const LqrTask& task, const Matrix& K, double step,
                     UpdateRule rule) {
  if (step < 0) throw ArgumentError("policy_update: step must be >= 0");
  PolicyEvaluation ev = evaluate_policy(task, K);
  Matrix grad = 2.0 * ev.E * ev.Sigma;
  switch (rule) {
    case UpdateRule::GD:
      return K - step * grad;
    case UpdateRule::NaturalGD:
      return K - step * grad * ev.Sigma.llt().solve(
                                   Matrix::Identity(ev.Sigma.rows(), ev.Sigma.cols()));
    case UpdateRule::GaussNewton: {
      Matrix G = task.R() + task.B().transpose() * ev.P * task.B();
      Matrix nat = grad * ev.Sigma.llt().solve(
                              Matrix::Identity(ev.Sigma.rows(), ev.Sigma.cols()));
      return K - step * G.llt().solve(nat);
    }
  }
  throw ArgumentError("policy_update: unknown rule");
}

}  // namespace metalqr
