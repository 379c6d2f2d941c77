#pragma once

#include <cstdint>

#include "metalqr/lqr_core.hpp"

namespace metalqr {

// Purpose tag of an RNG stream; part of the stream key so that no two
// logical sample sequences ever collide.
enum class RngPurpose : std::uint64_t {
  RolloutNoise = 1,
  InitState = 2,
  Perturbation = 3,
  InnerPerturbation = 4,
  InnerRollout = 5,
  AdaptedRollout = 6,
  TaskBatch = 7,
  TaskGen = 8,
  Test = 9,
};

struct StreamKey {
  std::uint64_t experiment_seed = 0;
  std::uint64_t task_index = 0;
  std::uint64_t iteration = 0;
  std::uint64_t perturbation_index = 0;
  RngPurpose purpose = RngPurpose::Test;
};

// Counter-based stream: the sample sequence is a pure function of the key,
// so identical keys reproduce bit-identical draws regardless of execution
// order elsewhere in the program.
class RngStream {
 public:
  explicit RngStream(const StreamKey& key);

  std::uint64_t next_u64();
  double uniform01();  // in (0, 1)
  double normal();     // standard normal, Box-Muller with pair caching

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0;
  bool have_cached_ = false;
};

struct RolloutResult {
  double empirical_cost;     // (1/l) sum_{t=1..l} x_t' (Q + K'RK) x_t
  Matrix empirical_gramian;  // (1/l) sum_{t=1..l} x_t x_t'
  long horizon;

  RolloutResult(double cost, Matrix gramian, long horizon,
                const LqrTask& task, const Matrix& K);
};

// Simulate x_{t+1} = (A - BK) x_t + w_t for `horizon` steps from
// x_0 ~ N(0, Sigma0), averaging cost and Gramian over t = 1..horizon.
RolloutResult rollout(const LqrTask& task, const Matrix& K, long horizon,
                      RngStream& rng);

// Cost-only fast path used by the zeroth-order estimators.
double rollout_cost(const LqrTask& task, const Matrix& K, long horizon,
                    RngStream& rng);

// Exact E[empirical_cost] by covariance propagation:
// S_0 = Sigma0, S_{t+1} = (A-BK) S_t (A-BK)' + Psi.
double expected_finite_horizon_cost(const LqrTask& task, const Matrix& K,
                                    long horizon);

}  // namespace metalqr
