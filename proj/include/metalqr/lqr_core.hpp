#pragma once

#include <vector>

#include "metalqr/linalg.hpp"

namespace metalqr {

// One LTI system with quadratic cost, sign convention u = -K x:
//   x_{t+1} = A x_t + B u_t + w_t,  w_t ~ N(0, Psi),  x_0 ~ N(0, Sigma0).
class LqrTask {
 public:
  LqrTask(Matrix A, Matrix B, Matrix Q, Matrix R, Matrix Psi, Matrix Sigma0);

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& Q() const { return Q_; }
  const Matrix& R() const { return R_; }
  const Matrix& Psi() const { return Psi_; }
  const Matrix& Sigma0() const { return Sigma0_; }

  Eigen::Index state_dim() const { return A_.rows(); }
  Eigen::Index control_dim() const { return B_.cols(); }

  // Factor L with L L' = Psi (resp. Sigma0), cached for rollouts.
  const Matrix& psi_factor() const { return psi_factor_; }
  const Matrix& sigma0_factor() const { return sigma0_factor_; }

 private:
  Matrix A_, B_, Q_, R_, Psi_, Sigma0_;
  Matrix psi_factor_, sigma0_factor_;
};

// Ordered task collection sharing dimensions, with a prior over tasks.
class TaskSet {
 public:
  TaskSet(std::vector<LqrTask> tasks, std::vector<double> weights);

  // Uniform prior.
  explicit TaskSet(std::vector<LqrTask> tasks);

  const std::vector<LqrTask>& tasks() const { return tasks_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return tasks_.size(); }
  const LqrTask& operator[](std::size_t i) const { return tasks_[i]; }
  Eigen::Index state_dim() const { return tasks_.front().state_dim(); }
  Eigen::Index control_dim() const { return tasks_.front().control_dim(); }

 private:
  void validate() const;

  std::vector<LqrTask> tasks_;
  std::vector<double> weights_;
};

struct PolicyEvaluation {
  Matrix P;      // value matrix: P = Q + K'RK + (A-BK)' P (A-BK)
  Matrix Sigma;  // Gramian: Sigma = Psi + (A-BK) Sigma (A-BK)'
  Matrix E;      // (R + B'PB) K - B'PA; zero exactly at the optimum
  double cost;   // Tr(P Psi) == Tr((Q + K'RK) Sigma)
};

enum class UpdateRule { GD, NaturalGD, GaussNewton };

bool is_stable(const LqrTask& task, const Matrix& K);

PolicyEvaluation evaluate_policy(const LqrTask& task, const Matrix& K,
                                 const SolverOptions& opts = {});

double exact_cost(const LqrTask& task, const Matrix& K);

// grad J(K) = 2 E_K Sigma_K.
Matrix exact_gradient(const LqrTask& task, const Matrix& K);

// Hessian action: 2 (R + B'PB) X Sigma - 4 B' Ptilde[X] (A-BK) Sigma,
// with Ptilde[X] = (A-BK)' Ptilde[X] (A-BK) + X'E + E'X.
Matrix exact_hessian_action(const LqrTask& task, const Matrix& K, const Matrix& X);

// Sum over tasks of w_i * J_i(K - eta * grad J_i(K)).
double meta_objective(const TaskSet& tasks, const Matrix& K, double eta);

// grad L(K) = sum_i w_i (I - eta hess J_i(K)) grad J_i(K - eta grad J_i(K)).
Matrix exact_meta_gradient(const TaskSet& tasks, const Matrix& K, double eta);

Matrix policy_update(const LqrTask& task, const Matrix& K, double step,
                     UpdateRule rule);

}  // namespace metalqr
