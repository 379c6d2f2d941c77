#include "metalqr/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace metalqr {

double spectral_radius(const Matrix& m) {
  if (m.rows() != m.cols())
    throw DimensionError("spectral_radius: matrix must be square");
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double frobenius_norm(const Matrix& m) { return m.norm(); }

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

void require_symmetric(const Matrix& m, const char* name, double tol) {
  if (!is_symmetric(m, tol))
    throw ArgumentError(std::string(name) + " must be symmetric");
}

double min_eigenvalue_sym(const Matrix& m) {
  if (m.rows() == 1) return m(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

double lyapunov_residual(const Matrix& sigma, const Matrix& F, const Matrix& W) {
  return (sigma - W - F * sigma * F.transpose()).norm();
}

}  // namespace

Matrix solve_discrete_lyapunov(const Matrix& F, const Matrix& W,
                               const SolverOptions& opts) {
  opts.validate();
  const Eigen::Index d = F.rows();
  if (F.cols() != d) throw DimensionError("solve_discrete_lyapunov: F must be square");
  if (W.rows() != d || W.cols() != d)
    throw DimensionError("solve_discrete_lyapunov: W must match F");
  require_symmetric(W, "W");

  const double rho = spectral_radius(F);
  if (!(rho < 1.0))
    throw InstabilityError("solve_discrete_lyapunov: rho(F) = " +
                           std::to_string(rho) + " >= 1");

  if (d == 1) {
    return Matrix::Constant(1, 1, W(0, 0) / (1.0 - F(0, 0) * F(0, 0)));
  }

  if (d <= 32) {
    // vec(F Sigma F') = (F kron F) vec(Sigma); solve (I - F kron F) x = vec(W).
    const Eigen::Index n = d * d;
    Matrix M = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index p = 0; p < d; ++p)
          for (Eigen::Index q = 0; q < d; ++q)
            M(i + d * j, p + d * q) -= F(i, p) * F(j, q);
    Eigen::VectorXd w(n);
    for (Eigen::Index q = 0; q < d; ++q)
      for (Eigen::Index p = 0; p < d; ++p) w(p + d * q) = W(p, q);
    Eigen::VectorXd x = M.partialPivLu().solve(w);
    Matrix sigma(d, d);
    for (Eigen::Index q = 0; q < d; ++q)
      for (Eigen::Index p = 0; p < d; ++p) sigma(p, q) = x(p + d * q);
    sigma = symmetrize(sigma);
    const double res = lyapunov_residual(sigma, F, W);
    if (!(res <= opts.tolerance) && !(res <= 1e-9 * (1.0 + W.norm() + sigma.norm())))
      throw ConvergenceError("solve_discrete_lyapunov: direct solve residual " +
                                 std::to_string(res),
                             res);
    return sigma;
  }

  // Fixed point Sigma <- W + F Sigma F' with squared-operator acceleration:
  // iterating G <- G*G, S <- S + G S G' doubles the series length each step.
  Matrix S = W;
  Matrix G = F;
  for (long it = 0; it < opts.max_iterations; ++it) {
    Matrix next = S + G * S * G.transpose();
    G = (G * G).eval();
    next = symmetrize(next);
    const double res = lyapunov_residual(next, F, W);
    S = std::move(next);
    if (res <= opts.tolerance) return S;
  }
  throw ConvergenceError("solve_discrete_lyapunov: no convergence",
                         lyapunov_residual(S, F, W));
}

DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q,
                        const Matrix& R, const SolverOptions& opts) {
  opts.validate();
  const Eigen::Index d = A.rows();
  const Eigen::Index k = B.cols();
  if (A.cols() != d) throw DimensionError("solve_dare: A must be square");
  if (B.rows() != d) throw DimensionError("solve_dare: B rows must match A");
  if (Q.rows() != d || Q.cols() != d) throw DimensionError("solve_dare: Q must be dxd");
  if (R.rows() != k || R.cols() != k) throw DimensionError("solve_dare: R must be kxk");
  require_symmetric(Q, "Q");
  require_symmetric(R, "R");
  {
    Eigen::LLT<Matrix> llt(R);
    if (llt.info() != Eigen::Success)
      throw ArgumentError("solve_dare: R must be positive definite");
  }

  Matrix P = Q;
  const Matrix Bt = B.transpose();
  const Matrix At = A.transpose();
  for (long it = 0; it < opts.max_iterations; ++it) {
    Matrix BtP = Bt * P;
    Matrix G = R + BtP * B;
    Matrix K = G.llt().solve(BtP * A);
    Matrix F = A - B * K;
    // P <- Q + K'RK + F'PF (Riccati map in gain form, keeps symmetry).
    Matrix next = Q + K.transpose() * R * K + F.transpose() * P * F;
    next = symmetrize(next);
    const double delta = (next - P).norm();
    P = std::move(next);
    if (delta <= opts.tolerance * 0.5 * (1.0 + P.norm())) {
      Matrix BtP2 = Bt * P;
      Matrix G2 = R + BtP2 * B;
      Matrix Kstar = G2.llt().solve(BtP2 * A);
      Matrix residual = P - Q - At * P * A +
                        At * P * B * G2.llt().solve(BtP2 * A);
      const double res = residual.norm();
      if (!(res <= opts.tolerance * (1.0 + P.norm())))
        throw ConvergenceError("solve_dare: residual " + std::to_string(res), res);
      if (!(spectral_radius(A - B * Kstar) < 1.0))
        throw ConvergenceError("solve_dare: computed gain not stabilizing", res);
      return {P, Kstar};
    }
  }
  throw ConvergenceError("solve_dare: no convergence within max_iterations",
                         std::numeric_limits<double>::quiet_NaN());
}

}  // namespace metalqr
