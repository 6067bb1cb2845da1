#pragma once

// Idealized wall-clock and compute-utilization estimates combining network
// communication, optimizer step time, and forward/backward compute time. No
// compute/communication overlap is modeled.
//
// A replica is treated as one flat fp32 tensor of model_bytes/4 parameters
// (a single logical row, so row-wise quantization metadata coincides with
// global). Streaming partitions split that tensor into equal fractions, each
// synchronized once per H steps:
//   total = steps * (compute + optimizer) + sum over events of
//           payload_bytes * volume_factor * 8 / bandwidth
// with volume factors 2(K-1)/K for ring all-reduce and for the all-to-all
// reduce-scatter + ring all-gather, and (K-1) for the plain all-gather.

#include <utility>
#include <vector>

#include "muloco/compress.hpp"

namespace muloco {

enum class Collective { ring_allreduce, a2a_rs_then_ag, allgather };

struct CostConfig {
    double bandwidth_bps = 1e9;     // bits per second
    double model_bytes = 0.0;       // per replica, fp32 accounting
    double compute_step_s = 0.0;    // forward/backward time per step
    double optimizer_step_s = 0.0;  // optimizer time per step
    int workers = 1;                // K
    int inner_steps = 1;            // H
    CompressorSpec compressor;
    Collective collective = Collective::ring_allreduce;
    long steps_total = 1;
    int streaming_partitions = 1;  // J

    void validate() const;
};

struct WallclockBreakdown {
    double total_s = 0.0;
    double compute_s = 0.0;
    double optimizer_s = 0.0;
    double comm_s = 0.0;
    long sync_events = 0;
    double per_event_payload_bytes = 0.0;  // one partition, before the volume factor
    double peak_event_bytes = 0.0;         // with the volume factor
    double total_comm_bytes = 0.0;
};

WallclockBreakdown estimate_wallclock(const CostConfig& cfg);

// utilization = non-communication time / total time, per bandwidth point.
std::vector<std::pair<double, double>> compute_utilization(const CostConfig& cfg,
                                                           const std::vector<double>& bandwidth_grid);

}  // namespace muloco
