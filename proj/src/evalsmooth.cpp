#include "muloco/evalsmooth.hpp"

#include <cmath>

namespace muloco {

double ema_update(double previous, bool has_previous, double loss, long dt, double alpha,
                  long sync_interval) {
    if (!has_previous) return loss;  // s_1 = l_1 regardless of its dt
    const double a = 1.0 - std::exp(-alpha * static_cast<double>(dt) / static_cast<double>(sync_interval));
    return a * loss + (1.0 - a) * previous;
}

double smoothed_final_loss(const LossTrajectory& traj, double alpha, long sync_interval) {
    if (alpha <= 0.0) throw ContractError("smoothed_final_loss: alpha must be positive");
    if (sync_interval < 1) throw ContractError("smoothed_final_loss: sync interval must be >= 1");
    long prev_step = 0;
    double s = 0.0;
    bool seeded = false;
    long last = -1;
    for (const auto& [step, loss] : traj.points) {
        if (step <= last) throw ContractError("smoothed_final_loss: steps must be strictly increasing");
        last = step;
        if (!std::isfinite(loss)) throw ContractError("smoothed_final_loss: non-finite loss");
        if (step % sync_interval != 0) continue;  // keep synchronization boundaries only
        s = ema_update(s, seeded, loss, step - prev_step, alpha, sync_interval);
        seeded = true;
        prev_step = step;
    }
    if (!seeded) throw ContractError("smoothed_final_loss: no measurements at synchronization boundaries");
    return s;
}

}  // namespace muloco
