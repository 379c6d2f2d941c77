#include "metalqr/rollout_sim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace metalqr {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t acc, std::uint64_t v) {
  return splitmix64(acc ^ (v + 0x9E3779B97F4A7C15ULL + (acc << 6) + (acc >> 2)));
}

}  // namespace

RngStream::RngStream(const StreamKey& key) {
  std::uint64_t k = splitmix64(key.experiment_seed);
  k = mix_key(k, key.task_index);
  k = mix_key(k, key.iteration);
  k = mix_key(k, key.perturbation_index);
  k = mix_key(k, static_cast<std::uint64_t>(key.purpose));
  key_ = k;
}

std::uint64_t RngStream::next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

double RngStream::uniform01() {
  // 53-bit mantissa, shifted into (0, 1).
  return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  cached_ = rad * std::sin(ang);
  have_cached_ = true;
  return rad * std::cos(ang);
}

RolloutResult::RolloutResult(double cost, Matrix gramian, long horizon_in,
                             const LqrTask& task, const Matrix& K)
    : empirical_cost(cost), empirical_gramian(std::move(gramian)),
      horizon(horizon_in) {
  const Matrix C = task.Q() + K.transpose() * task.R() * K;
  const double from_gramian = (empirical_gramian * C).trace();
  if (std::abs(from_gramian - empirical_cost) >
      1e-10 * (1.0 + std::abs(empirical_cost)))
    throw Error("RolloutResult: cost/Gramian consistency violated");
}

namespace {

constexpr double kOverflowNorm = 1e150;

template <bool WithGramian>
std::pair<double, Matrix> simulate(const LqrTask& task, const Matrix& K,
                                   long horizon, RngStream& rng) {
  if (horizon < 1) throw ArgumentError("rollout: horizon must be >= 1");
  const Eigen::Index d = task.state_dim();
  const Eigen::Index k = task.control_dim();
  if (K.rows() != k || K.cols() != d)
    throw DimensionError("rollout: gain must be k x d");
  if (!K.allFinite()) throw ArgumentError("rollout: gain has non-finite entries");

  if (d == 1 && k == 1) {
    const double f = task.A()(0, 0) - task.B()(0, 0) * K(0, 0);
    const double c = task.Q()(0, 0) + K(0, 0) * K(0, 0) * task.R()(0, 0);
    const double lpsi = task.psi_factor()(0, 0);
    const double l0 = task.sigma0_factor()(0, 0);
    double x = l0 * rng.normal();
    double cost = 0, gram = 0;
    for (long t = 1; t <= horizon; ++t) {
      x = f * x + lpsi * rng.normal();
      if (std::abs(x) > kOverflowNorm)
        throw DivergenceError("rollout: state overflow at step " + std::to_string(t), t);
      cost += x * x;
      if constexpr (WithGramian) gram += x * x;
    }
    const double inv = 1.0 / double(horizon);
    Matrix G;
    if constexpr (WithGramian) G = Matrix::Constant(1, 1, gram * inv);
    return {cost * c * inv, std::move(G)};
  }

  const Matrix F = task.A() - task.B() * K;
  const Matrix C = symmetrize(task.Q() + K.transpose() * task.R() * K);
  const Matrix& Lpsi = task.psi_factor();
  const Matrix& L0 = task.sigma0_factor();

  Eigen::VectorXd z(d), x(d), next(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  x.noalias() = L0 * z;
  double cost = 0;
  Matrix G = Matrix::Zero(d, d);
  for (long t = 1; t <= horizon; ++t) {
    for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
    next.noalias() = F * x;
    next.noalias() += Lpsi * z;
    x.swap(next);
    if (x.squaredNorm() > kOverflowNorm * kOverflowNorm)
      throw DivergenceError("rollout: state overflow at step " + std::to_string(t), t);
    cost += x.dot(C * x);
    if constexpr (WithGramian) G.noalias() += x * x.transpose();
  }
  const double inv = 1.0 / double(horizon);
  if constexpr (WithGramian) G *= inv;
  return {cost * inv, std::move(G)};
}

}  // namespace

RolloutResult rollout(const LqrTask& task, const Matrix& K, long horizon,
                      RngStream& rng) {
  auto [cost, gram] = simulate<true>(task, K, horizon, rng);
  return RolloutResult(cost, std::move(gram), horizon, task, K);
}

double rollout_cost(const LqrTask& task, const Matrix& K, long horizon,
                    RngStream& rng) {
  return simulate<false>(task, K, horizon, rng).first;
}

double expected_finite_horizon_cost(const LqrTask& task, const Matrix& K,
                                    long horizon) {
  if (horizon < 1)
    throw ArgumentError("expected_finite_horizon_cost: horizon must be >= 1");
  if (!is_stable(task, K))
    throw InstabilityError("expected_finite_horizon_cost: unstable gain");
  const Matrix F = task.A() - task.B() * K;
  const Matrix C = symmetrize(task.Q() + K.transpose() * task.R() * K);
  Matrix S = task.Sigma0();
  double acc = 0;
  for (long t = 1; t <= horizon; ++t) {
    S = symmetrize(F * S * F.transpose() + task.Psi());
    acc += (C * S).trace();
  }
  return acc / double(horizon);
}

}  // namespace metalqr
