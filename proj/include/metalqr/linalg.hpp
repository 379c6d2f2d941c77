#pragma once

#include <Eigen/Dense>

#include "metalqr/errors.hpp"

namespace metalqr {

using Matrix = Eigen::MatrixXd;

struct SolverOptions {
  double tolerance = 1e-10;   // Frobenius-norm residual threshold
  long max_iterations = 100000;

  void validate() const {
    if (!(tolerance > 0)) throw ArgumentError("SolverOptions: tolerance must be > 0");
    if (max_iterations < 1) throw ArgumentError("SolverOptions: max_iterations must be >= 1");
  }
};

struct DareSolution {
  Matrix P;       // value matrix, symmetric PD
  Matrix K_star;  // optimal gain (R + B'PB)^{-1} B'PA
};

// max |lambda| over the eigenvalues of a square matrix.
double spectral_radius(const Matrix& m);

double frobenius_norm(const Matrix& m);

// Throws if |x - x'| exceeds tol in any entry.
void require_symmetric(const Matrix& m, const char* name, double tol = 1e-12);

bool is_symmetric(const Matrix& m, double tol = 1e-12);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue_sym(const Matrix& m);

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Solves Sigma = W + F Sigma F' for stable F and symmetric PSD W.
// Direct Kronecker solve for d <= 32, fixed-point iteration above.
Matrix solve_discrete_lyapunov(const Matrix& F, const Matrix& W,
                               const SolverOptions& opts = {});

// Value iteration on the Riccati map from P0 = Q.
DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q,
                        const Matrix& R, const SolverOptions& opts = {});

}  // namespace metalqr
