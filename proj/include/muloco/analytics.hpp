#pragma once

// Pseudogradient diagnostics: alignment distributions, top-S interference
// gap, per-step Frobenius-norm traces, and the nuclear-norm decomposition
// audit relating |Psi|_* to per-step alignment.

#include <string>
#include <vector>

#include "muloco/engine.hpp"

namespace muloco {

// Percent-style S: "top 5%" of r singular values -> max(1, round(pct/100 * r)).
int top_s_from_percent(double pct, std::size_t min_dim);

// G_S = (1/N) sum_i sum_{j<=S} sigma_j(A_i) - sum_{j<=S} sigma_j(mean A).
// Non-negative up to numerical noise; zero for identical inputs.
double interference_gap(const std::vector<Matrix>& deltas, int top_s);

struct AuditStep {
    int worker = 0;
    int step = 0;
    double alpha = 0.0;
    Matrix psi;
};

struct AuditRecord {
    double lhs_nuclear = 0.0;       // |Psi|_*
    double rhs_general = 0.0;       // (sqrt(r)/K) sum rho * alpha * |psi|_F
    double rhs_orthonormal = 0.0;   // (r/K) sum rho * alpha, meaningful for orthonormal steps
    double rel_discrepancy = 0.0;   // |lhs - rhs| / lhs
    bool degenerate = false;        // Psi = 0: the orthonormal factor is undefined
};

// Verifies |Psi|_* against the alignment decomposition. The caller supplies
// the true constituents: psi must equal (1/K) sum alpha * psi_step within
// 1e-9 (relative to the constituent mass), otherwise a ContractError is
// raised. Zero-norm steps contribute nothing (their alpha*|psi| factor is 0).
AuditRecord nuclear_decomposition_audit(const std::vector<AuditStep>& steps, const Matrix& psi,
                                        int workers);

struct MetricRow {
    std::string param;
    int worker = -1;  // -1 when the metric is not worker-specific
    int round = 0;
    std::string metric;
    double value = 0.0;
};

struct QuartileSummary {
    std::string metric;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    std::size_t count = 0;
};

struct AlignmentReport {
    std::vector<MetricRow> rows;
    std::vector<QuartileSummary> summary;
};

// Cosine-similarity metrics from a run with snapshot logging enabled:
//   psi_vs_reference   pseudogradient vs the same round/param of `reference`
//   delta_vs_psi       each worker's communicated delta vs the pseudogradient
//   step_vs_psi        each inner step vs the pseudogradient (one row per step)
// Degenerate (zero) tensors produce `<metric>_degenerate` rows instead of NaN.
AlignmentReport alignment_report(const RunResult& run, const RunResult* reference = nullptr);

struct SpectralRow {
    std::string param;
    int round = 0;
    std::string source;  // "delta" or "psi"
    int worker = -1;
    int index = 0;  // singular value rank
    double value = 0.0;
};

struct GapRow {
    std::string param;
    int round = 0;
    int top_s = 0;
    double gap = 0.0;
};

struct SpectralReport {
    std::vector<SpectralRow> singular_values;
    std::vector<GapRow> gaps;
};

// Requires worker-delta snapshots; gaps evaluated at each percent in
// `top_s_percents` (mapped through top_s_from_percent).
SpectralReport spectra(const RunResult& run, const std::vector<double>& top_s_percents);

struct StepNormStats {
    std::string param;
    int round = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population
    double cv = 0.0;
};

// Per-step norm table (pass-through of the engine's step_norms log).
std::vector<StepNormRecord> step_norm_trace(const RunResult& run);

// Coefficient of variation of step norms pooled over workers and steps,
// per (param, round).
std::vector<StepNormStats> step_norm_stats(const RunResult& run);

}  // namespace muloco
