#pragma once

// Pseudogradient formation and the outer SGD-with-Nesterov-momentum update:
//   u'     = mu * u + eta_out * psi
//   theta' = theta - mu * u' - eta_out * psi
//
// When the communicated deltas are lossless, the theta update is evaluated
// anchored at the average worker endpoint,
//   theta' = endpoint_avg + (1 - eta_out) * psi - mu * u',
// which is algebraically identical and collapses exactly onto the averaged
// endpoint in the K=1, mu=0, eta_out=1 reduction. Lossy codecs must use the
// theta-referenced form (the anchor would reintroduce uncommunicated
// information), so the anchor is optional.

#include <vector>

#include "muloco/param_set.hpp"

namespace muloco {

struct OuterConfig {
    double lr = 0.7;        // eta_out
    double momentum = 0.6;  // mu
};

struct OuterState {
    ParamSet u;  // Nesterov momentum, zero-initialized, shapes match the model

    static OuterState zeros_like(const ParamSet& model) { return {model.zeros_like()}; }
};

// psi = (1/K) * sum_k (global_before - worker_after_k), reduced in ascending
// worker index. Throws on an empty worker list or shape mismatch.
ParamSet pseudogradient(const ParamSet& global_before, const std::vector<ParamSet>& workers_after);

// Single-matrix kernel; `anchor` is the average worker endpoint or nullptr.
void outer_step_matrix(Matrix& theta, const Matrix& psi, Matrix& u, const OuterConfig& cfg,
                       const Matrix* anchor = nullptr);

// Whole-model update; applies outer_step_matrix per parameter.
void outer_step(ParamSet& theta, const ParamSet& psi, OuterState& state, const OuterConfig& cfg,
                const ParamSet* endpoint_anchor = nullptr);

}  // namespace muloco
