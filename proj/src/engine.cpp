#include "muloco/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "muloco/evalsmooth.hpp"

namespace muloco {

namespace {

constexpr double kDivergenceThreshold = 1e12;
constexpr double kPi = 3.14159265358979323846;

struct WorkerRuntime {
    int id = 0;
    ParamSet theta;
    std::vector<long> shard;
    std::vector<AdamwState> adamw;  // indexed by parameter
    std::vector<MuonState> muon;
    std::vector<Matrix> ef_residual;

    // Per-round log buffers, merged by the coordinator in ascending id order.
    std::vector<StepRecord> step_records;
    std::vector<StepNormRecord> step_norms;

    bool failed = false;
    int fail_step = 0;
    double fail_loss = 0.0;
};

bool muon_governed(const RunConfig& cfg, const NamedParam& p) {
    return cfg.inner.algorithm == Algorithm::muon && p.hidden;
}

void run_worker_segment(WorkerRuntime& w, const RunConfig& cfg, const ModelTask& task, int round,
                        int step_begin, int step_count, long total_steps) {
    OptimConfig muon_cfg = cfg.inner;
    muon_cfg.algorithm = Algorithm::muon;
    OptimConfig adamw_cfg = cfg.inner;
    adamw_cfg.algorithm = Algorithm::adamw;

    for (int s = 0; s < step_count; ++s) {
        const int step_in_round = step_begin + s;
        const long t = static_cast<long>(round) * cfg.inner_steps + step_in_round;
        const double lr = lr_at(t, total_steps, cfg.lr_schedule, cfg.inner.lr);
        muon_cfg.lr = lr;
        adamw_cfg.lr = lr;

        const BatchKey key{cfg.seed, round, step_in_round};
        auto [loss, grads] = task.loss_and_grad(w.theta, key, w.shard);
        if (!std::isfinite(loss) || loss > kDivergenceThreshold) {
            w.failed = true;
            w.fail_step = step_in_round;
            w.fail_loss = loss;
            return;
        }

        const bool log_any = cfg.log.step_records || cfg.log.step_norms;
        for (std::size_t p = 0; p < w.theta.size(); ++p) {
            Matrix before;
            if (log_any) before = w.theta[p].value;

            double alpha = lr;
            if (muon_governed(cfg, w.theta[p])) {
                alpha = muon_effective_lr(muon_cfg, w.theta[p].value.rows(), w.theta[p].value.cols());
                MuonResult r = muon_step(w.theta[p].value, grads[p].value, w.muon[p], muon_cfg);
                w.theta[p].value = std::move(r.theta);
                w.muon[p] = std::move(r.state);
            } else {
                AdamwResult r = adamw_step(w.theta[p].value, grads[p].value, w.adamw[p], adamw_cfg);
                w.theta[p].value = std::move(r.theta);
                w.adamw[p] = std::move(r.state);
            }

            if (log_any) {
                const Matrix applied = step_record(before, w.theta[p].value);
                if (cfg.log.step_norms)
                    w.step_norms.push_back({w.id, step_in_round + 1, w.theta[p].name, alpha,
                                            frobenius_norm(applied)});
                if (cfg.log.step_records) {
                    Matrix psi(applied.rows(), applied.cols());
                    if (alpha != 0.0)
                        for (std::size_t i = 0; i < applied.size(); ++i) psi[i] = applied[i] / alpha;
                    w.step_records.push_back(
                        {w.id, step_in_round + 1, w.theta[p].name, alpha, std::move(psi)});
                }
            }
        }
    }
}

}  // namespace

void RunConfig::validate() const {
    if (workers < 1) throw ContractError("RunConfig: workers must be >= 1");
    if (inner_steps < 1) throw ContractError("RunConfig: inner_steps must be >= 1");
    if (rounds < 1) throw ContractError("RunConfig: rounds must be >= 1");
    if (streaming_partitions < 1) throw ContractError("RunConfig: streaming_partitions must be >= 1");
    if (inner_steps % streaming_partitions != 0)
        throw ContractError("RunConfig: streaming_partitions must divide inner_steps");
    if (global_batch < 1) throw ContractError("RunConfig: global_batch must be >= 1");
    if (global_batch % workers != 0)
        throw ContractError("RunConfig: global_batch must be divisible by workers");
    if (!(inner.lr >= 0.0) || !(outer.lr >= 0.0))
        throw ContractError("RunConfig: learning rates must be finite and non-negative");
    if (outer.momentum < 0.0 || outer.momentum >= 1.0)
        throw ContractError("RunConfig: outer momentum must lie in [0, 1)");
    if (eval_ema_alpha <= 0.0) throw ContractError("RunConfig: eval_ema_alpha must be positive");
    compressor.validate();
}

double lr_at(long step, long total_steps, LrSchedule schedule, double lr_max) {
    if (step < 0 || step >= total_steps) throw ContractError("lr_at: step out of range");
    if (schedule == LrSchedule::constant || total_steps == 1) return lr_max;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lr_max * (0.1 + 0.45 * (1.0 + std::cos(kPi * t)));
}

std::vector<SyncSubset> streaming_round_plan(int inner_steps, int partitions, const ParamSet& params) {
    if (partitions < 1) throw ContractError("streaming_round_plan: partitions must be >= 1");
    if (inner_steps < 1 || inner_steps % partitions != 0)
        throw ContractError("streaming_round_plan: partitions must divide inner_steps");

    const std::size_t total = params.total_elements();
    std::vector<SyncSubset> subsets(partitions);
    for (int j = 0; j < partitions; ++j) {
        subsets[j].index = j + 1;
        subsets[j].sync_offset = (j + 1) * inner_steps / partitions;
    }
    int cur = 0;
    std::size_t cum = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        subsets[cur].param_indices.push_back(p);
        cum += params[p].value.size();
        const auto target = static_cast<std::size_t>(std::llround(
            static_cast<double>(total) * static_cast<double>(cur + 1) / static_cast<double>(partitions)));
        if (cur + 1 < partitions && cum >= target) ++cur;
    }
    return subsets;
}

std::vector<long> worker_shard(long global_batch, int workers, int worker) {
    std::vector<long> shard;
    for (long e = worker; e < global_batch; e += workers) shard.push_back(e);
    return shard;
}

RunResult run(const RunConfig& cfg, const ModelTask& task, int threads) {
    cfg.validate();
    const int k = cfg.workers;
    const int h = cfg.inner_steps;
    const int j = cfg.streaming_partitions;
    const long total_steps = static_cast<long>(cfg.rounds) * h;
    const bool lossless = is_lossless(cfg.compressor);

    ParamSet theta = task.init_params(cfg.seed);
    const std::vector<SyncSubset> subsets = streaming_round_plan(h, j, theta);
    OuterState outer = OuterState::zeros_like(theta);

    // Per-subset delta baselines: the global values at each subset's last sync.
    std::vector<Matrix> baseline(theta.size());
    for (std::size_t p = 0; p < theta.size(); ++p) baseline[p] = theta[p].value;

    std::vector<WorkerRuntime> workers(k);
    for (int w = 0; w < k; ++w) {
        workers[w].id = w;
        workers[w].theta = theta;
        workers[w].shard = worker_shard(cfg.global_batch, k, w);
        for (const auto& p : theta) {
            workers[w].adamw.push_back(AdamwState::zeros(p.value.rows(), p.value.cols()));
            workers[w].muon.push_back(MuonState::zeros(p.value.rows(), p.value.cols()));
            if (cfg.compressor.error_feedback)
                workers[w].ef_residual.emplace_back(p.value.rows(), p.value.cols());
        }
    }

    RunResult result;
    double smoothed = 0.0;
    bool ema_seeded = false;

    for (int round = 0; round < cfg.rounds; ++round) {
        RoundLog rl;
        rl.round = round;

        int prev_offset = 0;
        for (int seg = 0; seg < j; ++seg) {
            const SyncSubset& sub = subsets[seg];
            const int step_count = sub.sync_offset - prev_offset;

            auto segment = [&](WorkerRuntime& w) {
                run_worker_segment(w, cfg, task, round, prev_offset, step_count, total_steps);
            };
            const int nthreads = std::min(threads, k);
            if (nthreads <= 1) {
                for (auto& w : workers) segment(w);
            } else {
                std::vector<std::thread> pool;
                pool.reserve(nthreads);
                for (int tid = 0; tid < nthreads; ++tid) {
                    pool.emplace_back([&, tid] {
                        for (int w = tid; w < k; w += nthreads) segment(workers[w]);
                    });
                }
                for (auto& t : pool) t.join();
            }
            for (const auto& w : workers) {
                if (w.failed) {
                    std::ostringstream msg;
                    msg << "divergence: round " << round << ", worker " << w.id << ", step "
                        << w.fail_step << ", loss " << w.fail_loss;
                    throw NumericalError(msg.str());
                }
            }
            prev_offset = sub.sync_offset;

            // Synchronize this subset's parameters.
            double event_sent = 0.0;
            for (std::size_t p : sub.param_indices) {
                std::vector<EncodedDelta> encoded;
                encoded.reserve(k);
                for (auto& w : workers) {  // ascending worker index
                    const Matrix delta = baseline[p] - w.theta[p].value;
                    if (cfg.compressor.error_feedback)
                        encoded.push_back(ef_wrap(delta, w.ef_residual[p], cfg.compressor));
                    else
                        encoded.push_back(encode(delta, cfg.compressor));
                }

                auto [psi, stats] = collective_reduce(encoded, cfg.compressor);

                Matrix anchor;
                if (lossless) {
                    anchor = Matrix(psi.rows(), psi.cols());
                    for (const auto& w : workers)
                        for (std::size_t i = 0; i < anchor.size(); ++i)
                            anchor[i] += w.theta[p].value[i];
                    for (std::size_t i = 0; i < anchor.size(); ++i)
                        anchor[i] /= static_cast<double>(k);
                }
                outer_step_matrix(theta[p].value, psi, outer.u[p].value, cfg.outer,
                                  lossless ? &anchor : nullptr);

                baseline[p] = theta[p].value;
                for (auto& w : workers) {
                    w.theta[p].value = theta[p].value;
                    if (cfg.reset_inner_state) {
                        w.adamw[p] = AdamwState::zeros(psi.rows(), psi.cols());
                        w.muon[p] = MuonState::zeros(psi.rows(), psi.cols());
                    }
                }

                rl.comm += stats;
                event_sent += stats.sent_bytes_per_worker;
                if (cfg.log.pseudogradients) rl.psi_snapshots.push_back({theta[p].name, psi});
                if (cfg.log.worker_deltas)
                    for (int wi = 0; wi < k; ++wi)
                        rl.delta_snapshots.push_back({theta[p].name, wi, decode(encoded[wi])});
            }
            rl.peak_sync_sent_bytes = std::max(rl.peak_sync_sent_bytes, event_sent);
            rl.sync_events += 1;
        }

        for (auto& w : workers) {
            rl.step_records.insert(rl.step_records.end(),
                                   std::make_move_iterator(w.step_records.begin()),
                                   std::make_move_iterator(w.step_records.end()));
            rl.step_norms.insert(rl.step_norms.end(), w.step_norms.begin(), w.step_norms.end());
            w.step_records.clear();
            w.step_norms.clear();
        }

        // Evaluate the live rank-0 replica at the round boundary. With J=1 it
        // equals the global model bitwise; with staggered partitions the
        // assembled global model would carry built-in staleness that no
        // training replica ever has.
        rl.raw_eval_loss = task.eval_loss(workers.front().theta, cfg.seed);
        smoothed = ema_update(smoothed, ema_seeded, rl.raw_eval_loss, h, cfg.eval_ema_alpha, h);
        ema_seeded = true;
        rl.smoothed_eval_loss = smoothed;
        result.rounds.push_back(std::move(rl));
    }

    result.theta = std::move(theta);
    return result;
}

}  // namespace muloco
