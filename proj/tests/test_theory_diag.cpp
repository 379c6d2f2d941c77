#include <cmath>
#include <random>

#include "doctest.h"
#include "metalqr/rollout_sim.hpp"
#include "metalqr/theory_diag.hpp"
#include "test_support.hpp"

using namespace metalqr;
using namespace metalqr::testing;

namespace {

LqrTask scalar_task(double sigma0 = 1.0) {
  auto c = [](double v) { return Matrix::Constant(1, 1, v); };
  return LqrTask(c(0.9), c(1), c(1), c(1), c(1), c(sigma0));
}

}  // namespace

TEST_CASE("check_maml_stabilizing basics") {
  TaskSet tasks({scalar_task()});
  auto sol = solve_dare(tasks[0].A(), tasks[0].B(), tasks[0].Q(), tasks[0].R());
  auto flags = check_maml_stabilizing(tasks, sol.K_star, 0.01);
  CHECK(flags[0]);

  // eta = 0 reduces to joint stability.
  auto joint = check_maml_stabilizing(tasks, Matrix::Zero(1, 1), 0.0);
  CHECK(joint[0] == is_stable(tasks[0], Matrix::Zero(1, 1)));
}

TEST_CASE("non-meta-learnable pair: A1=3,B1=4 vs A2=1,B2=-1") {
  auto c = [](double v) { return Matrix::Constant(1, 1, v); };
  std::vector<LqrTask> v{LqrTask(c(3), c(4), c(1), c(1), c(1), c(1)),
                         LqrTask(c(1), c(-1), c(1), c(1), c(1), c(1))};
  TaskSet tasks(std::move(v));
  for (double k = -3.0; k <= 3.0; k += 1e-3) {
    auto flags = check_maml_stabilizing(tasks, Matrix::Constant(1, 1, k), 1e-3);
    CHECK((!flags[0] || !flags[1]));
  }
}

TEST_CASE("gradient_domination_constant scalar value and mu^2 scaling") {
  const double lambda = gradient_domination_constant(scalar_task());
  // K* = 0.9 p/(1+p) with p = (0.81 + sqrt(0.81^2+4))/2, so
  // lambda = 1 - (0.9 - K*)^2 = 0.86871...
  CHECK(lambda == doctest::Approx(0.8687).epsilon(1e-3));
  // Doubling sigma_min(Sigma0) quadruples lambda; Sigma_{K*} is unaffected.
  CHECK(gradient_domination_constant(scalar_task(2.0)) ==
        doctest::Approx(4.0 * lambda).epsilon(1e-12));
}

TEST_CASE("gradient domination inequality holds with the Psi floor") {
  std::mt19937 gen(19);
  for (int trial = 0; trial < 100; ++trial) {
    LqrTask task = random_task(1 + int(gen() % 3), 1 + int(gen() % 2), gen);
    Matrix K = random_stable_gain(task, gen);
    auto sol = solve_dare(task.A(), task.B(), task.Q(), task.R());
    const double gap = exact_cost(task, K) - exact_cost(task, sol.K_star);
    const double lambda_psi = gradient_domination_constant_psi(task);
    const double bound = exact_gradient(task, K).squaredNorm() / lambda_psi;
    CHECK(gap <= bound + 1e-9 * (1.0 + gap));
  }
}

TEST_CASE("trust_radius scalar hand value and Q,R scale invariance") {
  TaskSet tasks({scalar_task()});
  Matrix K = Matrix::Constant(1, 1, 0.5);
  const double h = trust_radius(tasks, K);
  CHECK(h == doctest::Approx(1.0 / (4.0 * (1.25 / 0.84) * 1.4)).epsilon(1e-12));
  CHECK(h == doctest::Approx(0.12000).epsilon(1e-3));

  auto c = [](double v) { return Matrix::Constant(1, 1, v); };
  const double scale = 3.7;
  TaskSet scaled({LqrTask(c(0.9), c(1), c(scale), c(scale), c(1), c(1))});
  CHECK(trust_radius(scaled, K) == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("trust_radius perturbations preserve stability") {
  std::mt19937 gen(29);
  std::vector<LqrTask> v;
  for (int i = 0; i < 3; ++i) v.push_back(random_task(2, 2, gen));
  TaskSet tasks(std::move(v));
  Matrix K = Matrix::Zero(2, 2);
  const double h = trust_radius(tasks, K);
  CHECK(h > 0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix delta = randn(2, 2, gen);
    delta *= h * std::uniform_real_distribution<>(0, 1)(gen) / delta.norm();
    for (std::size_t i = 0; i < tasks.size(); ++i)
      CHECK(is_stable(tasks[i], K + delta));
  }
}

TEST_CASE("bernstein_sample_size hand value and monotonicity") {
  CHECK(bernstein_sample_size(1, 1, 1.0, 1.0, 0.5, 0.1) == 28);
  CHECK(bernstein_sample_size(1, 1, 1.0, 1.0, 0.25, 0.1) >=
        bernstein_sample_size(1, 1, 1.0, 1.0, 0.5, 0.1));
  CHECK(bernstein_sample_size(1, 1, 1.0, 1.0, 0.5, 0.05) >=
        bernstein_sample_size(1, 1, 1.0, 1.0, 0.5, 0.1));
  CHECK_THROWS_AS(bernstein_sample_size(1, 1, 1.0, 1.0, 2.0, 0.1), ArgumentError);
}

TEST_CASE("rollout_length_bound hand value and 1/eps scaling") {
  TaskSet tasks({scalar_task()});
  Matrix K = Matrix::Constant(1, 1, 0.5);
  CHECK(rollout_length_bound(tasks, K, 0.1) == 28);
  const long tight = rollout_length_bound(tasks, K, 0.01);
  CHECK(tight >= 10 * (rollout_length_bound(tasks, K, 0.1) - 1));
  CHECK(tight <= 10 * rollout_length_bound(tasks, K, 0.1));
}

TEST_CASE("rollout_length_bound achieves the bias target") {
  std::mt19937 gen(41);
  const Matrix I2 = Matrix::Identity(2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix A = randn(2, 2, gen);
    A *= (0.3 + 0.5 * std::uniform_real_distribution<>(0, 1)(gen)) /
         spectral_radius(A);
    LqrTask task(A, randn(2, 2, gen), I2, I2, I2, I2);
    Matrix K = Matrix::Zero(2, 2);
    const double eps = 0.05;
    const long bound = rollout_length_bound(task, K, eps);
    REQUIRE(bound <= 2000000);
    const double exact = exact_cost(task, K);
    const double approx = expected_finite_horizon_cost(task, K, bound);
    CHECK(std::abs(approx - exact) <= eps);
  }
}

TEST_CASE("diagnose produces a coherent report") {
  std::mt19937 gen(47);
  std::vector<LqrTask> v;
  for (int i = 0; i < 3; ++i) v.push_back(random_task(2, 2, gen));
  TaskSet tasks(std::move(v));
  Matrix K0 = Matrix::Zero(2, 2);
  auto report = diagnose(tasks, K0, 1e-5, K0);
  CHECK(report.trust_radius > 0);
  for (const auto& t : report.per_task) {
    CHECK(t.stable);
    CHECK(t.maml_stabilizing);
    CHECK(t.lambda > 0);
    CHECK(t.lambda_psi > 0);
    // At K = K0 the sub-level margin is exactly gamma*Delta0 - Delta0 = 0.
    CHECK(std::abs(t.sublevel_margin) <= 1e-9);
    CHECK(t.graddom_satisfied);
  }
}
