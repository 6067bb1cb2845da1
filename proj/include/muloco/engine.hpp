#pragma once

// The MuLoCo/DiLoCo training loop: K workers taking H local steps per round,
// optional error feedback and codec on the communicated deltas, the simulated
// collective, the Nesterov outer step, and staggered streaming partitions.
//
// Determinism: worker computation is pure given (seed, worker, round, step);
// all cross-worker arithmetic happens on the coordinator in ascending worker
// order; data comes from counter-based streams. Runs are bitwise identical
// for any thread count.

#include <cstdint>
#include <vector>

#include "muloco/compress.hpp"
#include "muloco/inner_optim.hpp"
#include "muloco/model_zoo.hpp"
#include "muloco/outer_optim.hpp"

namespace muloco {

enum class LrSchedule { constant, cosine_to_tenth };

struct SnapshotConfig {
    bool pseudogradients = false;  // per-parameter psi per sync
    bool worker_deltas = false;    // per-worker decoded deltas per sync
    bool step_records = false;     // per-step normalized step matrices (audit inputs)
    bool step_norms = false;       // per-step Frobenius norms only
};

struct RunConfig {
    int workers = 1;           // K
    int inner_steps = 30;      // H
    int rounds = 1;            // N
    OptimConfig inner;
    OuterConfig outer;
    CompressorSpec compressor;
    int streaming_partitions = 1;  // J, must divide H
    long global_batch = 8;         // divisible by K
    std::uint64_t seed = 0;
    LrSchedule lr_schedule = LrSchedule::constant;
    bool reset_inner_state = false;  // reset inner moments at synchronization
    double eval_ema_alpha = 0.2;
    SnapshotConfig log;

    void validate() const;
};

struct PsiSnapshot {
    std::string param;
    Matrix psi;
};

struct DeltaSnapshot {
    std::string param;
    int worker = 0;
    Matrix delta;  // decoded (post-codec) delta as communicated
};

struct StepRecord {
    int worker = 0;
    int step = 0;  // inner-step offset within the round, 1-based
    std::string param;
    double alpha = 0.0;  // effective learning rate of the step
    Matrix psi;          // (theta_before - theta_after) / alpha
};

struct StepNormRecord {
    int worker = 0;
    int step = 0;
    std::string param;
    double alpha = 0.0;
    double step_fro = 0.0;  // |theta_before - theta_after|_F
};

struct RoundLog {
    int round = 0;
    // Held-out loss of the live rank-0 replica at the round boundary (equal
    // to the global model when streaming_partitions == 1), raw and through
    // the time-weighted EMA.
    double raw_eval_loss = 0.0;
    double smoothed_eval_loss = 0.0;
    CommStats comm;                 // totals over the round's sync events
    double peak_sync_sent_bytes = 0.0;  // largest single-event per-worker send
    int sync_events = 0;
    std::vector<PsiSnapshot> psi_snapshots;
    std::vector<DeltaSnapshot> delta_snapshots;
    std::vector<StepRecord> step_records;
    std::vector<StepNormRecord> step_norms;
};

struct RunResult {
    ParamSet theta;
    std::vector<RoundLog> rounds;
};

// One streaming subset: parameter indices synchronized at a fixed inner-step
// offset of every round.
struct SyncSubset {
    int index = 0;        // j, 1-based
    int sync_offset = 0;  // j * H / J
    std::vector<std::size_t> param_indices;
};

// Contiguous partition of the parameter list into J subsets balanced by
// element count; subset j synchronizes at offset j*H/J. Throws if J does not
// divide H.
std::vector<SyncSubset> streaming_round_plan(int inner_steps, int partitions, const ParamSet& params);

// Learning rate at `step` of `total_steps`: eta_max under the constant
// schedule, cosine from eta_max down to 0.1*eta_max otherwise.
double lr_at(long step, long total_steps, LrSchedule schedule, double lr_max);

RunResult run(const RunConfig& cfg, const ModelTask& task, int threads = 1);

// Example indices of worker `k` in a global batch (round-robin assignment).
std::vector<long> worker_shard(long global_batch, int workers, int worker);

}  // namespace muloco
