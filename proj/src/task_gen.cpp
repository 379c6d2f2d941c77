#include "metalqr/task_gen.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace metalqr {

namespace {

Matrix random_entries(long rows, long cols, RngStream& rng, double low, double high) {
  Matrix m(rows, cols);
  for (long j = 0; j < cols; ++j)
    for (long i = 0; i < rows; ++i) m(i, j) = low + (high - low) * rng.uniform01();
  return m;
}

Matrix gaussian_around(const Matrix& center, double std_dev, RngStream& rng) {
  Matrix m(center.rows(), center.cols());
  for (long j = 0; j < center.cols(); ++j)
    for (long i = 0; i < center.rows(); ++i)
      m(i, j) = center(i, j) + std_dev * rng.normal();
  return m;
}

void rescale_spectral(Matrix& A, double target) {
  const double rho = spectral_radius(A);
  if (rho >= target) A *= target / rho;
}

// Symmetrize, then shift eigenvalues up when the matrix is not PD.
Matrix repair_pd(const Matrix& X) {
  Matrix S = symmetrize(X);
  const double lmin = min_eigenvalue_sym(S);
  if (lmin <= 0)
    S += (std::abs(lmin) + 0.1) * Matrix::Identity(S.rows(), S.cols());
  return S;
}

}  // namespace

TaskSet generate_tasks(const TaskGenSpec& spec, double eta) {
  spec.validate();
  const long d = spec.d, k = spec.k;

  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    StreamKey key{spec.seed, 0, attempt, 0, RngPurpose::TaskGen};
    RngStream rng(key);

    Matrix A0 = random_entries(d, d, rng, spec.center_entry_low, spec.center_entry_high);
    Matrix B0 = random_entries(d, k, rng, spec.center_entry_low, spec.center_entry_high);
    Matrix Q0 = random_entries(d, d, rng, spec.center_entry_low, spec.center_entry_high);
    Matrix R0 = random_entries(k, k, rng, spec.center_entry_low, spec.center_entry_high);
    Matrix P0 = random_entries(d, d, rng, spec.center_entry_low, spec.center_entry_high);
    rescale_spectral(A0, spec.spectral_target);
    Q0 = repair_pd(Q0);
    R0 = repair_pd(R0);
    P0 = repair_pd(P0);

    std::vector<LqrTask> tasks;
    tasks.reserve(spec.num_tasks);
    for (long i = 0; i < spec.num_tasks; ++i) {
      Matrix A = gaussian_around(A0, spec.perturbation_std, rng);
      Matrix B = gaussian_around(B0, spec.perturbation_std, rng);
      Matrix Q = gaussian_around(Q0, spec.perturbation_std, rng);
      Matrix R = gaussian_around(R0, spec.perturbation_std, rng);
      Matrix Psi = gaussian_around(P0, spec.perturbation_std, rng);
      rescale_spectral(A, spec.spectral_target);
      Q = repair_pd(Q);
      R = repair_pd(R);
      Psi = repair_pd(Psi);
      tasks.emplace_back(std::move(A), std::move(B), std::move(Q), std::move(R),
                         std::move(Psi), Matrix::Identity(d, d));
    }

    TaskSet set(std::move(tasks));
    const Matrix K0 = Matrix::Zero(k, d);
    bool feasible = true;
    for (std::size_t i = 0; i < set.size() && feasible; ++i) {
      if (!is_stable(set[i], K0)) { feasible = false; break; }
      feasible = is_stable(set[i], K0 - eta * exact_gradient(set[i], K0));
    }
    if (feasible) return set;
  }
  throw GenerationError(
      "generate_tasks: no feasible task set after 100 attempts; "
      "try a smaller perturbation_std");
}

}  // namespace metalqr
