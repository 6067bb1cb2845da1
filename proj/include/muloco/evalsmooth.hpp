#pragma once

// Time-weighted EMA estimate of the final evaluation loss. Measurements are
// first filtered to synchronization boundaries (step mod H == 0); then
//   s_1 = l_1,   s_j = a_j * l_j + (1 - a_j) * s_{j-1}
// with the adaptive coefficient a_j = 1 - exp(-alpha * dt_j / H).

#include <vector>

#include "muloco/errors.hpp"

namespace muloco {

struct LossTrajectory {
    std::vector<std::pair<long, double>> points;  // (step, loss), strictly increasing steps
    long sync_interval = 1;                       // H
};

double smoothed_final_loss(const LossTrajectory& traj, double alpha, long sync_interval);

// Incremental form used by the engine: fold one boundary measurement into the
// running estimate. `has_previous` is false for the first retained point.
double ema_update(double previous, bool has_previous, double loss, long dt, double alpha,
                  long sync_interval);

}  // namespace muloco
