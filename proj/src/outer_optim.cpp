#include "muloco/outer_optim.hpp"

namespace muloco {

ParamSet pseudogradient(const ParamSet& global_before, const std::vector<ParamSet>& workers_after) {
    if (workers_after.empty()) throw ContractError("pseudogradient: empty worker list");
    for (const auto& w : workers_after)
        if (!w.same_shapes(global_before)) throw ContractError("pseudogradient: shape mismatch");

    const double k = static_cast<double>(workers_after.size());
    ParamSet psi = global_before.zeros_like();
    for (std::size_t p = 0; p < global_before.size(); ++p) {
        Matrix& acc = psi[p].value;
        for (const auto& w : workers_after) {  // ascending worker index
            const Matrix& before = global_before[p].value;
            const Matrix& after = w[p].value;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += before[i] - after[i];
        }
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= k;
    }
    return psi;
}

void outer_step_matrix(Matrix& theta, const Matrix& psi, Matrix& u, const OuterConfig& cfg,
                       const Matrix* anchor) {
    if (!theta.same_shape(psi) || !theta.same_shape(u))
        throw ContractError("outer_step: shape mismatch");
    if (anchor && !anchor->same_shape(theta))
        throw ContractError("outer_step: anchor shape mismatch");

    const double mu = cfg.momentum;
    const double eta = cfg.lr;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double unew = mu * u[i] + eta * psi[i];
        u[i] = unew;
        if (anchor) {
            theta[i] = ((*anchor)[i] + (1.0 - eta) * psi[i]) - mu * unew;
        } else {
            theta[i] = (theta[i] - eta * psi[i]) - mu * unew;
        }
    }
}

void outer_step(ParamSet& theta, const ParamSet& psi, OuterState& state, const OuterConfig& cfg,
                const ParamSet* endpoint_anchor) {
    if (!theta.same_shapes(psi) || !theta.same_shapes(state.u))
        throw ContractError("outer_step: shape mismatch");
    for (std::size_t p = 0; p < theta.size(); ++p) {
        const Matrix* anchor = endpoint_anchor ? &(*endpoint_anchor)[p].value : nullptr;
        outer_step_matrix(theta[p].value, psi[p].value, state.u[p].value, cfg, anchor);
    }
}

}  // namespace muloco
