#include "muloco/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace muloco {

namespace {

double top_s_mass(const Matrix& a, int top_s) {
    const Svd s = svd(a);
    double mass = 0.0;
    for (int j = 0; j < top_s; ++j) mass += s.sigma[static_cast<std::size_t>(j)];
    return mass;
}

double quantile(std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

void append_cos_row(std::vector<MetricRow>& rows, const std::string& param, int worker, int round,
                    const std::string& metric, const Matrix& a, const Matrix& b) {
    if (frobenius_norm(a) == 0.0 || frobenius_norm(b) == 0.0) {
        rows.push_back({param, worker, round, metric + "_degenerate", 1.0});
        return;
    }
    rows.push_back({param, worker, round, metric, cosine_sim(a, b)});
}

}  // namespace

int top_s_from_percent(double pct, std::size_t min_dim) {
    const auto s = static_cast<long>(std::llround(pct / 100.0 * static_cast<double>(min_dim)));
    return static_cast<int>(std::max<long>(1, std::min<long>(s, static_cast<long>(min_dim))));
}

double interference_gap(const std::vector<Matrix>& deltas, int top_s) {
    if (deltas.empty()) throw ContractError("interference_gap: empty input");
    const Matrix& first = deltas.front();
    for (const auto& d : deltas)
        if (!d.same_shape(first)) throw ContractError("interference_gap: shape mismatch");
    if (top_s < 1 || static_cast<std::size_t>(top_s) > first.min_dim())
        throw ContractError("interference_gap: S out of range");

    Matrix mean(first.rows(), first.cols());
    double individual = 0.0;
    for (const auto& d : deltas) {
        individual += top_s_mass(d, top_s);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d[i];
    }
    const double n = static_cast<double>(deltas.size());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] /= n;
    return individual / n - top_s_mass(mean, top_s);
}

AuditRecord nuclear_decomposition_audit(const std::vector<AuditStep>& steps, const Matrix& psi,
                                        int workers) {
    if (workers < 1) throw ContractError("nuclear_decomposition_audit: workers must be >= 1");
    if (steps.empty()) throw ContractError("nuclear_decomposition_audit: no steps");
    for (const auto& s : steps)
        if (!s.psi.same_shape(psi)) throw ContractError("nuclear_decomposition_audit: shape mismatch");

    // Precondition: psi is the claimed combination of its constituents.
    const double inv_k = 1.0 / static_cast<double>(workers);
    Matrix recon(psi.rows(), psi.cols());
    double mass = 0.0;
    for (const auto& s : steps) {
        for (std::size_t i = 0; i < recon.size(); ++i) recon[i] += inv_k * s.alpha * s.psi[i];
        mass += inv_k * s.alpha * frobenius_norm(s.psi);
    }
    const double mismatch = frobenius_norm(recon - psi);
    if (mismatch > 1e-9 * (frobenius_norm(psi) + mass))
        throw ContractError("nuclear_decomposition_audit: psi is not the stated combination");

    AuditRecord rec;
    if (frobenius_norm(psi) == 0.0) {
        rec.degenerate = true;  // orthonormal factor undefined; both sides vanish
        return rec;
    }

    const Svd dec = svd(psi);
    const Matrix star = orthonormal_factor(dec);
    const double star_norm = frobenius_norm(star);
    const double r = static_cast<double>(psi.min_dim());

    double lhs = 0.0;
    for (double s : dec.sigma) lhs += s;
    rec.lhs_nuclear = lhs;

    double rhs = 0.0, rhs_orth = 0.0;
    for (const auto& s : steps) {
        const double norm = frobenius_norm(s.psi);
        if (norm == 0.0) continue;  // defined as a zero contribution
        const double rho = frobenius_inner(s.psi, star) / (norm * star_norm);
        rhs += rho * s.alpha * norm;
        rhs_orth += rho * s.alpha;
    }
    rec.rhs_general = std::sqrt(r) * inv_k * rhs;
    rec.rhs_orthonormal = r * inv_k * rhs_orth;
    rec.rel_discrepancy = std::abs(rec.lhs_nuclear - rec.rhs_general) / rec.lhs_nuclear;
    return rec;
}

AlignmentReport alignment_report(const RunResult& run, const RunResult* reference) {
    AlignmentReport report;
    bool any_psi = false;
    for (const auto& round : run.rounds) {
        if (!round.psi_snapshots.empty()) any_psi = true;
        std::map<std::string, const Matrix*> psi_by_param;
        for (const auto& snap : round.psi_snapshots) psi_by_param[snap.param] = &snap.psi;

        if (reference && round.round < static_cast<int>(reference->rounds.size())) {
            const auto& ref_round = reference->rounds[static_cast<std::size_t>(round.round)];
            for (const auto& snap : round.psi_snapshots) {
                for (const auto& ref_snap : ref_round.psi_snapshots) {
                    if (ref_snap.param != snap.param) continue;
                    append_cos_row(report.rows, snap.param, -1, round.round, "psi_vs_reference",
                                   snap.psi, ref_snap.psi);
                }
            }
        }
        for (const auto& d : round.delta_snapshots) {
            const auto it = psi_by_param.find(d.param);
            if (it == psi_by_param.end()) continue;
            append_cos_row(report.rows, d.param, d.worker, round.round, "delta_vs_psi", d.delta,
                           *it->second);
        }
        for (const auto& s : round.step_records) {
            const auto it = psi_by_param.find(s.param);
            if (it == psi_by_param.end()) continue;
            append_cos_row(report.rows, s.param, s.worker, round.round, "step_vs_psi", s.psi,
                           *it->second);
        }
    }
    if (!any_psi) throw ContractError("alignment_report: run has no pseudogradient snapshots");

    std::map<std::string, std::vector<double>> by_metric;
    for (const auto& r : report.rows) by_metric[r.metric].push_back(r.value);
    for (auto& [metric, values] : by_metric) {
        std::sort(values.begin(), values.end());
        report.summary.push_back({metric, values.front(), quantile(values, 0.25),
                                  quantile(values, 0.5), quantile(values, 0.75), values.back(),
                                  values.size()});
    }
    return report;
}

SpectralReport spectra(const RunResult& run, const std::vector<double>& top_s_percents) {
    SpectralReport report;
    bool any = false;
    for (const auto& round : run.rounds) {
        std::map<std::string, std::vector<Matrix>> deltas_by_param;
        for (const auto& d : round.delta_snapshots) deltas_by_param[d.param].push_back(d.delta);
        if (!deltas_by_param.empty()) any = true;

        for (const auto& d : round.delta_snapshots) {
            const Svd s = svd(d.delta);
            for (std::size_t i = 0; i < s.sigma.size(); ++i)
                report.singular_values.push_back(
                    {d.param, round.round, "delta", d.worker, static_cast<int>(i), s.sigma[i]});
        }
        for (const auto& snap : round.psi_snapshots) {
            const Svd s = svd(snap.psi);
            for (std::size_t i = 0; i < s.sigma.size(); ++i)
                report.singular_values.push_back(
                    {snap.param, round.round, "psi", -1, static_cast<int>(i), s.sigma[i]});
        }
        for (const auto& [param, deltas] : deltas_by_param) {
            for (double pct : top_s_percents) {
                const int s = top_s_from_percent(pct, deltas.front().min_dim());
                report.gaps.push_back({param, round.round, s, interference_gap(deltas, s)});
            }
        }
    }
    if (!any) throw ContractError("spectra: run has no worker-delta snapshots");
    return report;
}

std::vector<StepNormRecord> step_norm_trace(const RunResult& run) {
    std::vector<StepNormRecord> out;
    for (const auto& round : run.rounds)
        out.insert(out.end(), round.step_norms.begin(), round.step_norms.end());
    if (out.empty()) throw ContractError("step_norm_trace: run has no step-norm records");
    return out;
}

std::vector<StepNormStats> step_norm_stats(const RunResult& run) {
    std::vector<StepNormStats> out;
    for (const auto& round : run.rounds) {
        std::map<std::string, std::vector<double>> by_param;
        for (const auto& rec : round.step_norms) by_param[rec.param].push_back(rec.step_fro);
        for (const auto& [param, values] : by_param) {
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size());
            const double sd = std::sqrt(var);
            out.push_back({param, round.round, mean, sd, mean > 0.0 ? sd / mean : 0.0});
        }
    }
    if (out.empty()) throw ContractError("step_norm_stats: run has no step-norm records");
    return out;
}

}  // namespace muloco
