#pragma once

#include "metalqr/rollout_sim.hpp"

namespace metalqr {

struct TaskGenSpec {
  long d = 2;
  long k = 2;
  long num_tasks = 5;
  double center_entry_low = -1.0;
  double center_entry_high = 1.0;
  double perturbation_std = 0.25;  // entrywise Gaussian spread around the center
  double spectral_target = 0.9;    // rescale A so rho(A) <= this
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1 || k < 1) throw ArgumentError("TaskGenSpec: d, k must be >= 1");
    if (num_tasks < 1) throw ArgumentError("TaskGenSpec: num_tasks must be >= 1");
    if (!(spectral_target > 0 && spectral_target < 1))
      throw ArgumentError("TaskGenSpec: spectral_target must be in (0,1)");
    if (perturbation_std < 0)
      throw ArgumentError("TaskGenSpec: perturbation_std must be >= 0");
    if (!(center_entry_low < center_entry_high))
      throw ArgumentError("TaskGenSpec: center entry range is empty");
  }
};

// Center system drawn uniform entrywise, tasks drawn Gaussian around it,
// each rescaled/symmetrized/PD-repaired so that K = 0 stabilizes everything
// and the exact meta-gradient is defined at K0 = 0 with the given eta.
// Retries with fresh substreams up to 100 times.
TaskSet generate_tasks(const TaskGenSpec& spec, double eta = 1e-5);

}  // namespace metalqr
