#pragma once

// Per-worker inner optimizers: AdamW (bias-corrected, decoupled weight decay)
// and Muon (momentum + Newton-Schulz orthogonalization, optional per-matrix
// learning-rate rescaling by sqrt(cols/rows)).
//
// Decoupled weight decay is applied as a post-update scale,
//   theta' = (theta - eta_eff * step) * (1 - eta_eff * lambda),
// so a lambda > 0 run decomposes bitwise into the lambda = 0 run followed by
// the explicit scale.

#include "muloco/linalg.hpp"

namespace muloco {

enum class Algorithm { adamw, muon };

struct OptimConfig {
    Algorithm algorithm = Algorithm::adamw;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    int ns_iterations = 5;          // muon only
    bool lr_shape_rescale = true;   // muon only
};

struct AdamwState {
    Matrix m;
    Matrix v;
    long step_count = 0;

    static AdamwState zeros(std::size_t rows, std::size_t cols) {
        return {Matrix(rows, cols), Matrix(rows, cols), 0};
    }
};

struct MuonState {
    Matrix m;

    static MuonState zeros(std::size_t rows, std::size_t cols) { return {Matrix(rows, cols)}; }
};

struct AdamwResult {
    Matrix theta;
    AdamwState state;
};

struct MuonResult {
    Matrix theta;
    MuonState state;
};

AdamwResult adamw_step(const Matrix& theta, const Matrix& grad, const AdamwState& state,
                       const OptimConfig& cfg);

MuonResult muon_step(const Matrix& theta, const Matrix& grad, const MuonState& state,
                     const OptimConfig& cfg);

// Effective learning rate of a muon step on a rows x cols matrix.
double muon_effective_lr(const OptimConfig& cfg, std::size_t rows, std::size_t cols);

// The applied step theta_before - theta_after (weight decay included).
Matrix step_record(const Matrix& theta_before, const Matrix& theta_after);

}  // namespace muloco
