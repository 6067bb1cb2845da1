#pragma once

// Desk-scale differentiable tasks with analytic gradients, so the optimizer
// stack runs end-to-end without autodiff. Batches are generated on the fly
// from counter-based streams keyed (seed, round, step, example index); a
// worker's shard is the set of example indices congruent to its id mod K.

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "muloco/param_set.hpp"

namespace muloco {

struct BatchKey {
    std::uint64_t seed = 0;
    long round = 0;
    int step = 0;
};

struct ParamDecl {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool hidden = false;
};

class ModelTask {
  public:
    virtual ~ModelTask() = default;

    virtual const std::vector<ParamDecl>& param_decls() const = 0;
    virtual ParamSet init_params(std::uint64_t seed) const = 0;

    // Mean loss and gradient over the given example indices of the batch
    // identified by `key`. Pure: identical inputs give identical outputs.
    virtual std::pair<double, ParamSet> loss_and_grad(const ParamSet& theta, const BatchKey& key,
                                                      const std::vector<long>& examples) const = 0;

    // Loss on a fixed held-out batch keyed only by the run seed.
    virtual double eval_loss(const ParamSet& theta, std::uint64_t seed) const = 0;

    // Loss/gradient on caller-supplied raw input vectors, for tasks whose
    // examples are vectors (probing seam; generated-data tasks may refuse).
    virtual std::pair<double, ParamSet> loss_and_grad_inputs(
        const ParamSet&, const std::vector<std::vector<double>>&) const {
        throw ContractError("task does not accept raw inputs");
    }

    virtual std::optional<double> optimum_loss() const { return std::nullopt; }
    virtual std::optional<ParamSet> optimum_params() const { return std::nullopt; }
};

// loss = 1/2 vec(theta - theta*)^T A vec(theta - theta*) for a fixed SPD A of
// the given condition number and a random theta*; the stochastic gradient
// carries per-example Gaussian noise, so averaging a batch of B examples
// scales the noise by 1/sqrt(B). optimum_loss = 0. theta is a dim x dim
// hidden matrix so both inner optimizers are exercised.
std::unique_ptr<ModelTask> quadratic_bowl(int dim, double condition_number, std::uint64_t task_seed,
                                          double noise_scale = 0.1);

// Teacher-student regression through a tanh MLP. Hidden weight matrices are
// flagged hidden (Muon-governed in muon mode); biases are not. label_noise
// adds example-keyed Gaussian noise to the teacher targets, giving the loss
// an irreducible floor of label_noise^2 * out_dim / 2.
std::unique_ptr<ModelTask> two_layer_mlp(int in_dim, int hidden_dim, int out_dim,
                                         std::uint64_t task_seed, double label_noise = 0.0);

}  // namespace muloco
