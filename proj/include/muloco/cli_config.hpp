#pragma once

// Configuration-driven experiment runner: JSON experiment configs with sweep
// blocks, deterministic run naming, CSV/round-log emission, binary
// pseudogradient dumps, run manifests, and the analyze/fit/cost commands.
//
// Config schema (all keys optional unless noted; unknown keys are rejected):
// {
//   "task": { "kind": "quadratic_bowl" | "two_layer_mlp" (required),
//             "seed": u64,
//             "dim": int, "condition": real, "noise_scale": real,   (bowl)
//             "in_dim": int, "hidden_dim": int, "out_dim": int,
//             "label_noise": real },                                (mlp)
//   "run":  { "workers": int, "inner_steps": int, "rounds": int,
//             "global_batch": int, "seed": u64,
//             "lr_schedule": "constant" | "cosine_to_tenth",
//             "streaming_partitions": int, "reset_inner_state": bool,
//             "eval_ema_alpha": real,
//             "inner": { "algorithm": "adamw" | "muon", "lr", "beta1",
//                        "beta2", "epsilon", "weight_decay",
//                        "ns_iterations", "lr_shape_rescale" },
//             "outer": { "lr", "momentum" },
//             "compressor": { "kind": "none" | "topk" | "quant", "k_pct",
//                             "bits", "scheme", "granularity",
//                             "error_feedback", "ef_beta" } },
//   "log":  { "pseudogradients", "worker_deltas", "step_records",
//             "step_norms", "dump_deltas" },
//   "sweep": { "workers": [...], "inner_steps": [...],
//              "global_batch": [...], "compressor": [{...}...],
//              "seed": [...] },
//   "threads": int
// }
//
// Sweep axes expand lexicographically in the order workers, inner_steps,
// global_batch, compressor, seed (rightmost fastest); run names encode the
// grid index and the swept values.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "muloco/analytics.hpp"
#include "muloco/costmodel.hpp"
#include "muloco/engine.hpp"
#include "muloco/scaling_fit.hpp"

namespace muloco {

struct TaskConfig {
    std::string kind;
    std::uint64_t seed = 0;
    int dim = 4;
    double condition = 10.0;
    double noise_scale = 0.1;
    int in_dim = 16;
    int hidden_dim = 12;
    int out_dim = 8;
    double label_noise = 0.0;

    std::unique_ptr<ModelTask> instantiate() const;
};

struct ResolvedRun {
    std::string name;
    TaskConfig task;
    RunConfig run;
    bool dump_deltas = false;
};

struct ExperimentConfig {
    TaskConfig task;
    RunConfig base;
    bool dump_deltas = false;
    int threads = 1;

    std::vector<int> sweep_workers;
    std::vector<int> sweep_inner_steps;
    std::vector<long> sweep_global_batch;
    std::vector<CompressorSpec> sweep_compressors;
    std::vector<std::uint64_t> sweep_seeds;

    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_string(const std::string& text, const std::string& origin);

    std::vector<ResolvedRun> expand() const;
};

// Resolved single-run config as schema-conforming JSON text; re-parsing it
// yields an equivalent configuration (manifest round-trip contract).
std::string resolved_config_json(const ResolvedRun& run, int threads);

std::uint64_t fnv1a64(const std::string& text);

// Deterministic float formatting used by every CSV writer (%.17g).
std::string format_double(double v);

struct RunPaths {
    std::string dir;
    std::string rounds_csv;
    std::string step_norms_csv;
    std::string manifest_json;
    std::string dumps_dir;
};

RunPaths run_paths(const std::string& out_dir, const std::string& run_name);

// Executes the run grid; writes per-run round CSVs, manifests, optional
// dumps, and a summary.csv of final raw/smoothed losses. Returns run names.
std::vector<std::string> cmd_run(const ExperimentConfig& cfg, const std::string& out_dir,
                                 int threads_override = 0,
                                 const std::uint64_t* seed_override = nullptr);

// Reloads a dumped run (psi / delta / step snapshots) for offline analytics.
RunResult load_dumped_run(const std::string& run_dir);

struct AnalyzeOptions {
    std::string reference_dir;  // optional baseline run for psi_vs_reference
    std::vector<double> top_s_percents = {5.0};
    bool audit = true;
};

// Writes alignment/spectral/audit CSVs for each run directory.
void cmd_analyze(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                 const AnalyzeOptions& opts);

struct FitOptions {
    XVariable x = XVariable::compute;
    FitForm form = FitForm::plain;
    int restarts = 64;
    std::uint64_t seed = 0;
};

// Fits the CSV data and writes fit_report.json + fit_methods.csv; returns the fit.
PowerLawFit cmd_fit(const std::string& data_csv, const std::string& out_dir, const FitOptions& opts);

// Cost config JSON: model_bytes, compute_step_s, optimizer_step_s, workers,
// inner_steps, steps_total, collective, compressor, streaming_partitions,
// bandwidth_bps (scalar or array). Writes wallclock.csv and utilization.csv.
void cmd_cost(const std::string& config_path, const std::string& out_dir);

}  // namespace muloco
