#include "muloco/scaling_fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "muloco/rng.hpp"

namespace muloco {

namespace {

using rng::Key;
using rng::Stream;
using rng::StreamId;

constexpr int kPhaseOneCandidates = 200;
constexpr int kPhaseRestarts = 64;

double huber_grad(double r, double delta) {
    if (std::abs(r) <= delta) return r;
    return r > 0.0 ? delta : -delta;
}

struct MethodData {
    std::string method;
    std::vector<double> log_x;
    std::vector<double> x;
    std::vector<double> loss;
    std::vector<double> log_loss;
    double min_loss = 0.0;
};

std::vector<MethodData> group_by_method(const std::vector<FitDatum>& data) {
    std::vector<MethodData> out;
    for (const auto& d : data) {
        if (!(d.x > 0.0) || !std::isfinite(d.loss) || !(d.loss > 0.0))
            throw ContractError("fit_power_law: x and loss must be positive and finite");
        MethodData* m = nullptr;
        for (auto& g : out)
            if (g.method == d.method) m = &g;
        if (!m) {
            out.push_back(MethodData{d.method, {}, {}, {}, {}, 0.0});
            m = &out.back();
        }
        m->x.push_back(d.x);
        m->log_x.push_back(std::log(d.x));
        m->loss.push_back(d.loss);
        m->log_loss.push_back(std::log(d.loss));
    }
    for (auto& m : out) m.min_loss = *std::min_element(m.loss.begin(), m.loss.end());
    return out;
}

void check_rank(const MethodData& m, std::size_t min_points) {
    if (m.x.size() < min_points)
        throw ContractError("fit_power_law: method '" + m.method + "' needs at least " +
                            std::to_string(min_points) + " data points");
    const double x0 = m.x.front();
    bool distinct = false;
    for (double x : m.x)
        if (x != x0) distinct = true;
    if (!distinct)
        throw ContractError("fit_power_law: rank deficiency, all x equal for method '" + m.method +
                            "'");
}

// Objective and gradient in (ln a, alpha[, ln c]) for one method; the offset
// can instead be held fixed (joint phases).
struct HuberLogObjective {
    const MethodData* data = nullptr;
    bool free_offset = false;
    double fixed_offset = 0.0;

    double operator()(const std::vector<double>& p, std::vector<double>& grad) const {
        const double log_a = p[0];
        const double alpha = p[1];
        const double c = free_offset ? std::exp(p[2]) : fixed_offset;
        grad.assign(p.size(), 0.0);
        double f = 0.0;
        for (std::size_t i = 0; i < data->x.size(); ++i) {
            const double pow_term = std::exp(log_a + alpha * data->log_x[i]);
            const double pred = pow_term + c;
            if (!(pred > 0.0) || !std::isfinite(pred)) return std::numeric_limits<double>::infinity();
            const double r = std::log(pred) - data->log_loss[i];
            f += huber(r);
            const double dr = huber_grad(r, kHuberDelta);
            grad[0] += dr * pow_term / pred;
            grad[1] += dr * pow_term * data->log_x[i] / pred;
            if (free_offset) grad[2] += dr * c / pred;
        }
        return f;
    }
};

using ObjectiveFn = std::function<double(const std::vector<double>&, std::vector<double>&)>;

struct MinimizeResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
};

// Compact L-BFGS with Armijo backtracking. Deterministic.
MinimizeResult lbfgs_minimize(const ObjectiveFn& fg, std::vector<double> x, int max_iters) {
    constexpr std::size_t kHistory = 10;
    constexpr double kArmijo = 1e-4;
    const std::size_t n = x.size();

    std::vector<double> g(n), g_new(n), x_new(n), direction(n);
    std::vector<std::vector<double>> s_hist, y_hist;
    std::vector<double> rho_hist;

    double f = fg(x, g);
    if (!std::isfinite(f)) return {x, f};

    for (int iter = 0; iter < max_iters; ++iter) {
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::abs(v));
        if (gmax <= 1e-12 * std::max(1.0, std::abs(f))) break;

        // Two-loop recursion.
        direction = g;
        std::vector<double> alpha_coef(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += s_hist[i][j] * direction[j];
            alpha_coef[i] = rho_hist[i] * dot;
            for (std::size_t j = 0; j < n; ++j) direction[j] -= alpha_coef[i] * y_hist[i][j];
        }
        if (!s_hist.empty()) {
            double sy = 0.0, yy = 0.0;
            const auto& s_last = s_hist.back();
            const auto& y_last = y_hist.back();
            for (std::size_t j = 0; j < n; ++j) {
                sy += s_last[j] * y_last[j];
                yy += y_last[j] * y_last[j];
            }
            if (yy > 0.0) {
                const double scale = sy / yy;
                for (auto& d : direction) d *= scale;
            }
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y_hist[i][j] * direction[j];
            const double beta = rho_hist[i] * dot;
            for (std::size_t j = 0; j < n; ++j) direction[j] += (alpha_coef[i] - beta) * s_hist[i][j];
        }
        double descent = 0.0;
        for (std::size_t j = 0; j < n; ++j) descent += g[j] * direction[j];
        if (!(descent > 0.0)) {  // fall back to steepest descent
            direction = g;
            descent = 0.0;
            for (double v : g) descent += v * v;
            if (descent == 0.0) break;
        }

        // Backtracking on x - t * direction.
        double t = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] - t * direction[j];
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f - kArmijo * t * descent) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;

        std::vector<double> s_vec(n), y_vec(n);
        double sy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s_vec[j] = x_new[j] - x[j];
            y_vec[j] = g_new[j] - g[j];
            sy += s_vec[j] * y_vec[j];
        }
        if (sy > 1e-16) {
            s_hist.push_back(std::move(s_vec));
            y_hist.push_back(std::move(y_vec));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > kHistory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        x = x_new;
        g = g_new;
        const double improvement = f - f_new;
        f = f_new;
        if (improvement <= 1e-16 * std::max(1.0, std::abs(f))) break;
    }
    return {x, f};
}

struct SingleFit {
    double log_a = 0.0;
    double alpha = 0.0;
    double offset = 0.0;
    double objective = std::numeric_limits<double>::infinity();
};

SingleFit fit_single_method(const MethodData& m, bool free_offset, double fixed_offset, int restarts,
                            std::uint64_t seed, std::uint64_t method_index) {
    HuberLogObjective obj{&m, free_offset, fixed_offset};
    SingleFit best;
    int best_restart = -1;
    for (int r = 0; r < restarts; ++r) {
        Stream s(Key{seed, StreamId::fit, method_index, static_cast<std::uint64_t>(r),
                     free_offset ? 1u : 0u});
        std::vector<double> x0;
        x0.push_back(-5.0 + 20.0 * s.next_uniform());          // ln a in [-5, 15]
        x0.push_back(-1.0 + s.next_uniform());                 // alpha in [-1, 0)
        if (free_offset) {
            const double lo = std::log(m.min_loss * 1e-6);
            const double hi = std::log(m.min_loss * 0.9999);
            x0.push_back(lo + (hi - lo) * s.next_uniform());   // ln c, log-uniform
        }
        const MinimizeResult res = lbfgs_minimize(
            [&](const std::vector<double>& p, std::vector<double>& grad) { return obj(p, grad); },
            x0, kLbfgsMaxIterations);
        if (std::isfinite(res.f) && (best_restart < 0 || res.f < best.objective)) {
            best.log_a = res.x[0];
            best.alpha = res.x[1];
            best.offset = free_offset ? std::exp(res.x[2]) : fixed_offset;
            best.objective = res.f;
            best_restart = r;
        }
    }
    if (best_restart < 0) throw NumericalError("fit_power_law: no restart produced a finite objective");
    return best;
}

double method_residual(const MethodData& m, const SingleFit& fit) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.x.size(); ++i) {
        const double pred = std::exp(fit.log_a + fit.alpha * m.log_x[i]) + fit.offset;
        acc += std::abs(std::log(pred) - m.log_loss[i]);
    }
    return acc / static_cast<double>(m.x.size());
}

std::vector<double> log_spaced(double lo, double hi, int count) {
    std::vector<double> out(static_cast<std::size_t>(count));
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < count; ++i)
        out[static_cast<std::size_t>(i)] =
            std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

}  // namespace

double huber(double r, double delta) {
    const double a = std::abs(r);
    if (a <= delta) return 0.5 * r * r;
    return delta * (a - 0.5 * delta);
}

PowerLawFit fit_power_law(const std::vector<FitDatum>& data, FitForm form, int restarts,
                          std::uint64_t seed) {
    if (restarts < 1) throw ContractError("fit_power_law: restarts must be >= 1");
    if (form == FitForm::joint_irr) return fit_joint_irr(data, restarts, seed);
    const bool free_offset = form == FitForm::per_method_offset;
    std::vector<MethodData> methods = group_by_method(data);
    if (methods.empty()) throw ContractError("fit_power_law: no data");

    PowerLawFit out;
    out.form = form;
    double residual = 0.0;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        check_rank(methods[mi], free_offset ? 3 : 2);
        const SingleFit fit = fit_single_method(methods[mi], free_offset, 0.0, restarts, seed, mi);
        out.methods.push_back({methods[mi].method, std::exp(fit.log_a), fit.alpha, fit.offset});
        out.objective += fit.objective;
        residual += method_residual(methods[mi], fit);
    }
    out.train_residual = residual / static_cast<double>(methods.size());
    return out;
}

PowerLawFit fit_joint_irr(const std::vector<FitDatum>& data, int restarts, std::uint64_t seed) {
    if (restarts < 1) throw ContractError("fit_joint_irr: restarts must be >= 1");
    std::vector<MethodData> methods = group_by_method(data);
    if (methods.empty()) throw ContractError("fit_joint_irr: no data");
    for (const auto& m : methods) check_rank(m, 3);

    double global_min = std::numeric_limits<double>::infinity();
    for (const auto& m : methods) global_min = std::min(global_min, m.min_loss);

    auto sweep = [&](const std::vector<double>& candidates, int phase_restarts) {
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
            double obj = 0.0;
            for (std::size_t mi = 0; mi < methods.size(); ++mi)
                obj += fit_single_method(methods[mi], false, candidates[ci], phase_restarts, seed, mi)
                           .objective;
            if (obj < best_obj) {
                best_obj = obj;
                best_idx = ci;
            }
        }
        return best_idx;
    };

    // Phase 1: coarse sweep below the smallest observed loss.
    const std::vector<double> coarse =
        log_spaced(global_min * 1e-4, global_min * 0.9999, kPhaseOneCandidates);
    const std::size_t c1 = sweep(coarse, kPhaseRestarts);

    // Phase 2: zoom around the winner at 10x resolution.
    const double lo = coarse[c1 == 0 ? 0 : c1 - 1];
    const double hi = coarse[std::min(c1 + 1, coarse.size() - 1)];
    const std::vector<double> fine = log_spaced(lo, hi, 21);
    const std::size_t c2 = sweep(fine, kPhaseRestarts);
    const double chosen = fine[c2];

    // Phase 3: final refit at the selected offset with the full budget.
    PowerLawFit out;
    out.form = FitForm::joint_irr;
    out.shared_irr = chosen;
    double residual = 0.0;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const SingleFit fit = fit_single_method(methods[mi], false, chosen, restarts, seed, mi);
        out.methods.push_back({methods[mi].method, std::exp(fit.log_a), fit.alpha, chosen});
        out.objective += fit.objective;
        residual += method_residual(methods[mi], fit);
    }
    out.train_residual = residual / static_cast<double>(methods.size());
    return out;
}

CriticalBatch critical_batch(const std::vector<FitDatum>& loss_vs_batch) {
    if (loss_vs_batch.size() < 3)
        throw ContractError("critical_batch: need at least 3 batch points");
    std::vector<std::pair<double, double>> pts;
    for (const auto& d : loss_vs_batch) {
        if (!(d.x > 0.0) || !std::isfinite(d.loss))
            throw ContractError("critical_batch: batch sizes must be positive, losses finite");
        pts.emplace_back(d.x, d.loss);
    }
    std::sort(pts.begin(), pts.end());

    std::size_t opt = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].second < pts[opt].second) opt = i;

    CriticalBatch out;
    out.b_opt = pts[opt].first;
    out.boundary = opt == 0 || opt + 1 == pts.size();
    const double threshold = 1.01 * pts[opt].second;
    for (const auto& [b, l] : pts)
        if (l <= threshold) out.b_crit = std::max(out.b_crit, b);
    return out;
}

MethodFit bcrit_power_law(const std::vector<std::pair<double, double>>& d_bcrit, int restarts,
                          std::uint64_t seed) {
    std::vector<FitDatum> data;
    for (const auto& [d, b] : d_bcrit) data.push_back({"bcrit", 1, d, b});
    const PowerLawFit fit = fit_power_law(data, FitForm::plain, restarts, seed);
    return fit.methods.front();
}

EfficiencyCurve efficiency_curve(const std::vector<std::pair<std::string, LossLaw>>& loss_laws,
                                 const std::vector<std::pair<std::string, BcritLaw>>& bcrit_laws,
                                 const std::string& baseline, double c_min, double c_max,
                                 int grid_points) {
    if (loss_laws.empty()) throw ContractError("efficiency_curve: no loss laws");
    if (!(c_min > 0.0) || !(c_max > c_min)) throw ContractError("efficiency_curve: bad compute range");
    if (grid_points < 8) throw ContractError("efficiency_curve: grid too small");

    auto bcrit_of = [&](const std::string& method) -> const BcritLaw& {
        for (const auto& [name, law] : bcrit_laws)
            if (name == method) return law;
        throw ContractError("efficiency_curve: no critical-batch law for '" + method + "'");
    };
    auto loss_of = [&](const std::string& method) -> const LossLaw& {
        for (const auto& [name, law] : loss_laws)
            if (name == method) return law;
        throw ContractError("efficiency_curve: no loss law for '" + method + "'");
    };
    loss_of(baseline);

    // Token-optimal coupling: C = 6 N D with D = 20 N, so D(C) = 20 sqrt(C/120).
    auto tokens_at = [](double c) { return 20.0 * std::sqrt(c / 120.0); };

    struct Table {
        std::vector<double> log_c, log_t;
    };
    std::vector<std::string> methods;
    std::vector<Table> tables;
    for (const auto& [name, law] : loss_laws) {
        const BcritLaw& bl = bcrit_of(name);
        Table t;
        const std::vector<double> cs = log_spaced(c_min, c_max, grid_points);
        double prev = -std::numeric_limits<double>::infinity();
        for (double c : cs) {
            const double bcrit = bl.a * std::pow(tokens_at(c), bl.alpha);
            if (!(bcrit > 0.0)) throw NumericalError("efficiency_curve: non-positive B_crit");
            const double time = c / bcrit;
            if (!(time > prev))
                throw NumericalError("efficiency_curve: training-time proxy is not monotone");
            prev = time;
            t.log_c.push_back(std::log(c));
            t.log_t.push_back(std::log(time));
        }
        methods.push_back(name);
        tables.push_back(std::move(t));
    }

    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    for (const auto& t : tables) {
        t_lo = std::max(t_lo, t.log_t.front());
        t_hi = std::min(t_hi, t.log_t.back());
    }
    if (!(t_hi > t_lo)) throw NumericalError("efficiency_curve: no common training-time range");

    auto invert = [](const Table& t, double log_time) {
        const auto it = std::lower_bound(t.log_t.begin(), t.log_t.end(), log_time);
        if (it == t.log_t.begin()) return t.log_c.front();
        if (it == t.log_t.end()) return t.log_c.back();
        const std::size_t hi = static_cast<std::size_t>(it - t.log_t.begin());
        const std::size_t lo = hi - 1;
        const double w = (log_time - t.log_t[lo]) / (t.log_t[hi] - t.log_t[lo]);
        return t.log_c[lo] * (1.0 - w) + t.log_c[hi] * w;
    };
    auto eval_loss = [&](const LossLaw& law, double log_c) {
        return law.a * std::exp(law.alpha * log_c) + law.offset;
    };

    std::size_t base_idx = 0;
    for (std::size_t i = 0; i < methods.size(); ++i)
        if (methods[i] == baseline) base_idx = i;

    EfficiencyCurve out;
    out.methods = methods;
    out.ratio.assign(methods.size(), {});
    for (int i = 0; i < grid_points; ++i) {
        const double lt =
            t_lo + (t_hi - t_lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
        out.time.push_back(std::exp(lt));
        const double base_loss = eval_loss(loss_of(baseline), invert(tables[base_idx], lt));
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const double l = eval_loss(loss_of(methods[m]), invert(tables[m], lt));
            out.ratio[m].push_back(base_loss / l);
        }
    }
    return out;
}

std::vector<FitRow> read_fit_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open fit data file: " + path);
    std::vector<FitRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        FitRow row;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw ConfigError("fit data row must have 6 columns "
                              "(method,K,N_params,tokens,batch_tokens,loss): " + line);
        try {
            row.method = fields[0];
            row.workers = std::stoi(fields[1]);
            row.n_params = std::stod(fields[2]);
            row.tokens = std::stod(fields[3]);
            row.batch_tokens = std::stod(fields[4]);
            row.loss = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw ConfigError("malformed fit data row: " + line);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("fit data file has no rows: " + path);
    return rows;
}

std::vector<FitDatum> to_fit_data(const std::vector<FitRow>& rows, XVariable x) {
    std::vector<FitDatum> out;
    for (const auto& r : rows) {
        FitDatum d;
        d.method = r.method + "_K" + std::to_string(r.workers);
        d.workers = r.workers;
        d.loss = r.loss;
        switch (x) {
            case XVariable::compute:
                d.x = 6.0 * r.n_params * r.tokens;
                break;
            case XVariable::tokens:
                d.x = r.tokens;
                break;
            case XVariable::batch:
                d.x = r.batch_tokens;
                break;
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace muloco
