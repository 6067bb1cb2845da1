#pragma once

// Power-law fitting: Huber loss in log space (delta = 0.001) minimized by a
// compact L-BFGS (history 10, Armijo backtracking, 15000-iteration cap) from
// multi-restart random initializations, plus the three-phase joint
// irreducible-loss search, critical-batch extraction, and the
// training-time-efficiency ratio.
//
// Restart initialization ranges (log-uniform / uniform, natural logs):
//   ln a in [-5, 15], alpha in [-1, 0), offset log-uniform in
//   (1e-6 * min L, 0.9999 * min L). Restart selection is by (objective,
//   restart index), so results are deterministic given the seed.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "muloco/errors.hpp"

namespace muloco {

struct FitDatum {
    std::string method;
    int workers = 1;
    double x = 0.0;  // compute, tokens, or batch depending on the analysis
    double loss = 0.0;
};

enum class FitForm { plain, per_method_offset, joint_irr };

struct MethodFit {
    std::string method;
    double a = 0.0;
    double alpha = 0.0;
    double offset = 0.0;  // per-method c, or the shared L_irr for joint fits
};

struct PowerLawFit {
    FitForm form = FitForm::plain;
    std::vector<MethodFit> methods;  // in order of first appearance
    double shared_irr = 0.0;         // joint_irr only
    double train_residual = 0.0;     // mean |log L_pred - log L_obs|
    double objective = 0.0;          // summed Huber objective
};

inline constexpr double kHuberDelta = 0.001;
inline constexpr int kLbfgsMaxIterations = 15000;

double huber(double r, double delta = kHuberDelta);

// Fits L(x) = a x^alpha (plain, >= 2 points per method) or
// L(x) = a x^alpha + c (per_method_offset, >= 3 points per method).
// All-equal x within a method raises a rank-deficiency ContractError.
PowerLawFit fit_power_law(const std::vector<FitDatum>& data, FitForm form, int restarts,
                          std::uint64_t seed);

// Shared-offset fit: phase 1 sweeps 200 candidate L_irr values log-spaced
// below the smallest observed loss at 64 restarts per method, phase 2 refines
// the winning neighborhood at 10x resolution, phase 3 refits at the selected
// L_irr with the full restart budget.
PowerLawFit fit_joint_irr(const std::vector<FitDatum>& data, int restarts, std::uint64_t seed);

struct CriticalBatch {
    double b_opt = 0.0;
    double b_crit = 0.0;
    bool boundary = false;  // optimum at the smallest or largest tested batch
};

// B_opt = argmin loss; B_crit = largest tested batch with
// L(B) <= 1.01 * L(B_opt). Input order does not matter.
CriticalBatch critical_batch(const std::vector<FitDatum>& loss_vs_batch);

// B_crit(D) = a D^alpha, single method, plain form.
MethodFit bcrit_power_law(const std::vector<std::pair<double, double>>& d_bcrit, int restarts,
                          std::uint64_t seed);

struct LossLaw {
    double a = 0.0;
    double alpha = 0.0;
    double offset = 0.0;
};

struct BcritLaw {
    double a = 0.0;
    double alpha = 0.0;
};

struct EfficiencyCurve {
    std::vector<double> time;  // sequential-FLOPs proxy T = C / B_crit(C)
    std::vector<std::string> methods;
    std::vector<std::vector<double>> ratio;  // [method][time], baseline loss / method loss
};

// Training-time efficiency under the token-optimal coupling D = 20 N,
// C = 6 N D: inverts T(C) = C / B_crit(D(C)) per method by monotone log-space
// interpolation over [c_min, c_max] and reports
// L_baseline(C_baseline(T)) / L_m(C_m(T)).
EfficiencyCurve efficiency_curve(const std::vector<std::pair<std::string, LossLaw>>& loss_laws,
                                 const std::vector<std::pair<std::string, BcritLaw>>& bcrit_laws,
                                 const std::string& baseline, double c_min, double c_max,
                                 int grid_points);

// CSV interface (columns: method, K, N_params, tokens, batch_tokens, loss).
struct FitRow {
    std::string method;
    int workers = 1;
    double n_params = 0.0;
    double tokens = 0.0;
    double batch_tokens = 0.0;
    double loss = 0.0;
};

enum class XVariable { compute, tokens, batch };

std::vector<FitRow> read_fit_csv(const std::string& path);

// Labels become "<method>_K<K>"; x is 6*N*D (compute), D (tokens), or
// batch_tokens.
std::vector<FitDatum> to_fit_data(const std::vector<FitRow>& rows, XVariable x);

}  // namespace muloco
