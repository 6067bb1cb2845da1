#include "muloco/inner_optim.hpp"

#include <cmath>

namespace muloco {

namespace {

void check_shapes(const Matrix& theta, const Matrix& grad, const Matrix& acc, const char* who) {
    if (!theta.same_shape(grad) || !theta.same_shape(acc))
        throw ContractError(std::string(who) + ": shape mismatch");
}

}  // namespace

double muon_effective_lr(const OptimConfig& cfg, std::size_t rows, std::size_t cols) {
    if (!cfg.lr_shape_rescale) return cfg.lr;
    return cfg.lr * std::sqrt(static_cast<double>(cols) / static_cast<double>(rows));
}

AdamwResult adamw_step(const Matrix& theta, const Matrix& grad, const AdamwState& state,
                       const OptimConfig& cfg) {
    if (cfg.algorithm != Algorithm::adamw) throw ContractError("adamw_step: config is not adamw");
    check_shapes(theta, grad, state.m, "adamw_step");
    check_shapes(theta, grad, state.v, "adamw_step");

    AdamwResult out{Matrix(theta.rows(), theta.cols()),
                    AdamwState{Matrix(theta.rows(), theta.cols()), Matrix(theta.rows(), theta.cols()),
                               state.step_count + 1}};
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(out.state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(out.state.step_count));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;

    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double m = b1 * state.m[i] + (1.0 - b1) * grad[i];
        const double v = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        out.state.m[i] = m;
        out.state.v[i] = v;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        out.theta[i] = (theta[i] - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.epsilon))) * decay;
    }
    return out;
}

MuonResult muon_step(const Matrix& theta, const Matrix& grad, const MuonState& state,
                     const OptimConfig& cfg) {
    if (cfg.algorithm != Algorithm::muon) throw ContractError("muon_step: config is not muon");
    check_shapes(theta, grad, state.m, "muon_step");

    MuonResult out{Matrix(theta.rows(), theta.cols()), MuonState{Matrix(theta.rows(), theta.cols())}};
    for (std::size_t i = 0; i < theta.size(); ++i)
        out.state.m[i] = cfg.beta1 * state.m[i] + grad[i];  // no (1 - beta) damping

    const Matrix o = newton_schulz(out.state.m, cfg.ns_iterations);
    const double eta = muon_effective_lr(cfg, theta.rows(), theta.cols());
    const double decay = 1.0 - eta * cfg.weight_decay;
    for (std::size_t i = 0; i < theta.size(); ++i)
        out.theta[i] = (theta[i] - eta * o[i]) * decay;
    return out;
}

Matrix step_record(const Matrix& theta_before, const Matrix& theta_after) {
    if (!theta_before.same_shape(theta_after)) throw ContractError("step_record: shape mismatch");
    return theta_before - theta_after;
}

}  // namespace muloco
