#include "metalqr/zoo_meta.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace metalqr {

namespace {

std::uint64_t salt_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (0x9E3779B97F4A7C15ULL + b + (a << 12) + (a >> 4));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<double> effective_weights(const TaskSet& tasks) {
  if (!tasks.weights().empty()) return tasks.weights();
  return std::vector<double>(tasks.size(), 1.0 / double(tasks.size()));
}

}  // namespace

CostOracle rollout_cost_oracle() {
  return [](const LqrTask& task, const Matrix& K, long horizon, RngStream& rng) {
    return rollout_cost(task, K, horizon, rng);
  };
}

CostOracle exact_cost_oracle() {
  return [](const LqrTask& task, const Matrix& K, long /*horizon*/, RngStream&) {
    return exact_cost(task, K);
  };
}

Matrix sample_sphere(Eigen::Index rows, Eigen::Index cols, double radius,
                     RngStream& rng) {
  if (!(radius > 0)) throw ArgumentError("sample_sphere: radius must be > 0");
  if (rows < 1 || cols < 1) throw DimensionError("sample_sphere: bad shape");
  Matrix U(rows, cols);
  double sq = 0;
  do {
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) U(i, j) = rng.normal();
    sq = U.squaredNorm();
  } while (!(sq > 0));
  U *= radius / std::sqrt(sq);
  return U;
}

GradientReport estimate_gradient(const LqrTask& task, const Matrix& K,
                                 const SmoothingParams& p, const StreamKey& key,
                                 const CostOracle& oracle, bool antithetic,
                                 bool compute_exact_error) {
  p.validate();
  const Eigen::Index d = task.state_dim();
  const Eigen::Index k = task.control_dim();
  if (K.rows() != k || K.cols() != d)
    throw DimensionError("estimate_gradient: gain must be k x d");
  const double scale = double(d * k) / (p.radius * p.radius);

  Matrix acc = Matrix::Zero(k, d);
  Matrix U(k, d);
  for (long m = 0; m < p.num_perturbations; ++m) {
    if (antithetic && (m % 2 == 1)) {
      U = -U;
    } else {
      StreamKey pk = key;
      pk.perturbation_index = std::uint64_t(m);
      pk.purpose = RngPurpose::Perturbation;
      RngStream ps(pk);
      U = sample_sphere(k, d, p.radius, ps);
    }
    // Antithetic halves share their rollout stream (common random numbers),
    // so the noise cancels in the pair difference instead of being amplified
    // by the 1/r^2 scale.
    const std::uint64_t noise_slot = antithetic ? std::uint64_t(m & ~1L) : std::uint64_t(m);
    StreamKey rk = key;
    rk.perturbation_index = noise_slot;
    rk.purpose = RngPurpose::RolloutNoise;
    RngStream rs(rk);
    double cost;
    try {
      cost = oracle(task, K + U, p.horizon, rs);
    } catch (const DivergenceError& e) {
      throw DivergenceError("perturbation " + std::to_string(m) + ": " + e.what(),
                            e.step());
    }
    acc.noalias() += cost * U;
  }
  GradientReport rep;
  rep.estimate = (scale / double(p.num_perturbations)) * acc;
  rep.method = GradientMethod::ZerothOrder;
  rep.samples_used = p.num_perturbations;
  if (compute_exact_error && is_stable(task, K))
    rep.exact_error = (rep.estimate - exact_gradient(task, K)).norm();
  return rep;
}

GradientReport estimate_meta_gradient(const TaskSet& tasks, const Matrix& K,
                                      const MetaConfig& cfg, std::uint64_t iteration,
                                      const CostOracle& oracle) {
  cfg.validate();
  const Eigen::Index d = tasks.state_dim();
  const Eigen::Index k = tasks.control_dim();
  if (K.rows() != k || K.cols() != d)
    throw DimensionError("estimate_meta_gradient: gain must be k x d");
  const SmoothingParams& p = cfg.smoothing;
  const double eta = cfg.adaptation_rate;
  const double scale = double(d * k) / (p.radius * p.radius);
  const auto weights = effective_weights(tasks);

  // Task batch drawn with replacement from the prior.
  std::vector<std::size_t> batch(cfg.task_batch_size);
  {
    StreamKey bk{cfg.seed, 0, iteration, 0, RngPurpose::TaskBatch};
    RngStream bs(bk);
    for (long b = 0; b < cfg.task_batch_size; ++b) {
      const double u = bs.uniform01();
      double cdf = 0;
      std::size_t pick = tasks.size() - 1;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        cdf += weights[i];
        if (u <= cdf) { pick = i; break; }
      }
      batch[b] = pick;
    }
  }

  SmoothingParams inner = p;
  inner.num_perturbations = cfg.effective_inner_m();

  Matrix acc = Matrix::Zero(k, d);
  Matrix U(k, d);
  for (long b = 0; b < cfg.task_batch_size; ++b) {
    const LqrTask& task = tasks[batch[b]];
    Matrix task_acc = Matrix::Zero(k, d);
    for (long m = 0; m < p.num_perturbations; ++m) {
      if (cfg.antithetic && (m % 2 == 1)) {
        U = -U;
      } else {
        StreamKey pk{cfg.seed, std::uint64_t(b), iteration, std::uint64_t(m),
                     RngPurpose::Perturbation};
        RngStream ps(pk);
        U = sample_sphere(k, d, p.radius, ps);
      }
      const Matrix Khat = K + U;
      // Inner zeroth-order gradient at the perturbed gain; its streams are
      // salted with the outer (b, m) slot so no sequence is reused. Antithetic
      // halves share the slot so inner and rollout noise cancel pairwise.
      const std::uint64_t m_slot =
          cfg.antithetic ? std::uint64_t(m & ~1L) : std::uint64_t(m);
      StreamKey ik{salt_mix(cfg.seed, salt_mix(std::uint64_t(b), m_slot + 1)),
                   std::uint64_t(b), iteration, 0, RngPurpose::InnerPerturbation};
      GradientReport inner_rep;
      try {
        inner_rep = estimate_gradient(task, Khat, inner, ik, oracle,
                                      cfg.antithetic, false);
      } catch (const DivergenceError& e) {
        throw DivergenceError("task " + std::to_string(batch[b]) +
                                  ", outer perturbation " + std::to_string(m) +
                                  " (inner): " + e.what(),
                              e.step());
      }
      const Matrix Kim = Khat - eta * inner_rep.estimate;
      StreamKey ak{cfg.seed, std::uint64_t(b), iteration, m_slot,
                   RngPurpose::AdaptedRollout};
      RngStream ar(ak);
      double cost;
      try {
        cost = oracle(task, Kim, p.horizon, ar);
      } catch (const DivergenceError& e) {
        throw DivergenceError("task " + std::to_string(batch[b]) +
                                  ", perturbation " + std::to_string(m) + ": " +
                                  e.what(),
                              e.step());
      }
      task_acc.noalias() += cost * U;
    }
    acc += task_acc / double(p.num_perturbations);
  }

  GradientReport rep;
  rep.estimate = (scale / double(cfg.task_batch_size)) * acc;
  rep.method = GradientMethod::ZerothOrder;
  rep.samples_used = cfg.task_batch_size * p.num_perturbations;
  if (cfg.report_exact_error) {
    try {
      rep.exact_error = (rep.estimate - exact_meta_gradient(tasks, K, eta)).norm();
    } catch (const InstabilityError&) {
      // Exact meta-gradient undefined here; leave the error empty.
    }
  }
  return rep;
}

LearningTrace run_meta_optimization(const TaskSet& tasks, const Matrix& K0,
                                    const MetaConfig& cfg, OptimizationMode mode,
                                    const CostOracle& oracle,
                                    const std::function<void(const TraceRow&)>& on_row) {
  cfg.validate();
  const double eta = cfg.adaptation_rate;
  const double alpha = cfg.learning_rate;

  // Feasibility gate: K0 must be MAML-stabilizing (exact oracles).
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!is_stable(tasks[i], K0))
      throw InstabilityError("run_meta_optimization: K0 unstable for task " +
                             std::to_string(i));
    if (!is_stable(tasks[i], K0 - eta * exact_gradient(tasks[i], K0)))
      throw InstabilityError(
          "run_meta_optimization: K0 not MAML-stabilizing for task " +
          std::to_string(i));
  }

  LearningTrace trace;
  trace.optimal_costs.reserve(tasks.size());
  for (const auto& task : tasks.tasks()) {
    DareSolution sol = solve_dare(task.A(), task.B(), task.Q(), task.R());
    trace.optimal_costs.push_back(exact_cost(task, sol.K_star));
  }
  const double optimal_sum =
      std::accumulate(trace.optimal_costs.begin(), trace.optimal_costs.end(), 0.0);

  Matrix K = K0;
  const auto t0 = std::chrono::steady_clock::now();
  for (long n = 0; n < cfg.max_iterations; ++n) {
    TraceRow row;
    row.iteration = n;
    row.policy = K;
    row.task_gaps.resize(tasks.size());
    double gap_sum = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      double cost;
      try {
        cost = exact_cost(tasks[i], K);
      } catch (const InstabilityError&) {
        throw StabilityViolationError(
            "run_meta_optimization: policy left the stabilizing set for task " +
                std::to_string(i) + " at iteration " + std::to_string(n),
            n);
      }
      row.task_gaps[i] = cost - trace.optimal_costs[i];
      gap_sum += row.task_gaps[i];
    }
    row.ratio = gap_sum / optimal_sum;

    if (cfg.check_stability) {
      row.maml_stabilizing = true;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!is_stable(tasks[i], K - eta * exact_gradient(tasks[i], K))) {
          row.maml_stabilizing = false;
          break;
        }
      }
      if (!row.maml_stabilizing) ++trace.stability_violations;
    }

    Matrix grad;
    if (mode == OptimizationMode::ExactOracle) {
      grad = exact_meta_gradient(tasks, K, eta);
    } else {
      grad = estimate_meta_gradient(tasks, K, cfg, std::uint64_t(n), oracle).estimate;
    }
    row.meta_grad_norm = grad.norm();
    row.wall_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.rows.push_back(std::move(row));
    if (on_row) on_row(trace.rows.back());

    if (trace.rows.back().meta_grad_norm <= cfg.tolerance) break;
    K -= alpha * grad;
  }
  return trace;
}

}  // namespace metalqr
