#include "muloco/costmodel.hpp"

#include <cmath>

namespace muloco {

namespace {

// Payload bytes for a flat slice of `elements` fp32 parameters under the
// codec; continuous accounting (fractional elements allowed for partitions).
double payload_bytes(const CompressorSpec& spec, double elements) {
    switch (spec.kind) {
        case CompressorKind::none:
            return 4.0 * elements;
        case CompressorKind::quant:
            return static_cast<double>(spec.bits) * elements / 8.0 + 8.0;
        case CompressorKind::topk: {
            const double kept = std::max(1.0, spec.k_pct / 100.0 * elements);
            const double idx_bits = elements > 1.0 ? std::ceil(std::log2(elements)) : 0.0;
            return kept * (4.0 + idx_bits / 8.0);
        }
    }
    return 0.0;
}

double volume_factor(Collective collective, int workers) {
    const double k = static_cast<double>(workers);
    switch (collective) {
        case Collective::ring_allreduce:
        case Collective::a2a_rs_then_ag:
            return 2.0 * (k - 1.0) / k;
        case Collective::allgather:
            return k - 1.0;
    }
    return 0.0;
}

}  // namespace

void CostConfig::validate() const {
    if (!(bandwidth_bps > 0.0)) throw ContractError("CostConfig: bandwidth must be positive");
    if (!(model_bytes >= 0.0)) throw ContractError("CostConfig: model_bytes must be non-negative");
    if (!(compute_step_s >= 0.0) || !(optimizer_step_s >= 0.0))
        throw ContractError("CostConfig: step times must be non-negative");
    if (workers < 1) throw ContractError("CostConfig: workers must be >= 1");
    if (inner_steps < 1) throw ContractError("CostConfig: inner_steps must be >= 1");
    if (steps_total < 1) throw ContractError("CostConfig: steps_total must be >= 1");
    if (streaming_partitions < 1) throw ContractError("CostConfig: streaming_partitions must be >= 1");
    compressor.validate();
}

WallclockBreakdown estimate_wallclock(const CostConfig& cfg) {
    cfg.validate();
    WallclockBreakdown out;
    out.compute_s = static_cast<double>(cfg.steps_total) * cfg.compute_step_s;
    out.optimizer_s = static_cast<double>(cfg.steps_total) * cfg.optimizer_step_s;

    const double params = cfg.model_bytes / 4.0;
    const double slice = params / static_cast<double>(cfg.streaming_partitions);
    const long rounds = cfg.steps_total / cfg.inner_steps;
    out.sync_events = rounds * cfg.streaming_partitions;
    out.per_event_payload_bytes = payload_bytes(cfg.compressor, slice);
    out.peak_event_bytes = out.per_event_payload_bytes * volume_factor(cfg.collective, cfg.workers);
    out.total_comm_bytes = out.peak_event_bytes * static_cast<double>(out.sync_events);
    out.comm_s = out.total_comm_bytes * 8.0 / cfg.bandwidth_bps;
    out.total_s = out.compute_s + out.optimizer_s + out.comm_s;
    return out;
}

std::vector<std::pair<double, double>> compute_utilization(const CostConfig& cfg,
                                                           const std::vector<double>& bandwidth_grid) {
    cfg.validate();
    std::vector<std::pair<double, double>> out;
    out.reserve(bandwidth_grid.size());
    for (double bw : bandwidth_grid) {
        if (!(bw > 0.0)) throw ContractError("compute_utilization: bandwidth must be positive");
        CostConfig c = cfg;
        c.bandwidth_bps = bw;
        const WallclockBreakdown wc = estimate_wallclock(c);
        const double busy = wc.compute_s + wc.optimizer_s;
        out.emplace_back(bw, busy / (busy + wc.comm_s));
    }
    return out;
}

}  // namespace muloco
