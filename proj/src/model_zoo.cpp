#include "muloco/model_zoo.hpp"

#include <cmath>

#include "muloco/rng.hpp"

namespace muloco {

namespace {

using rng::Key;
using rng::Stream;
using rng::StreamId;

constexpr std::size_t kEvalBatch = 256;

Matrix gaussian_matrix(Stream& s, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = scale * s.next_gaussian();
    return m;
}

class QuadraticBowl final : public ModelTask {
  public:
    QuadraticBowl(int dim, double condition_number, std::uint64_t task_seed, double noise_scale)
        : dim_(static_cast<std::size_t>(dim)), noise_scale_(noise_scale), task_seed_(task_seed) {
        if (dim < 1) throw ContractError("quadratic_bowl: dim must be >= 1");
        if (condition_number < 1.0) throw ContractError("quadratic_bowl: condition must be >= 1");
        const std::size_t d2 = dim_ * dim_;
        decls_ = {{"theta", dim_, dim_, true}};

        Stream ts(Key{task_seed, StreamId::task, 0, 0, 0});
        target_ = gaussian_matrix(ts, dim_, dim_, 1.0);

        if (condition_number == 1.0) {
            hessian_ = Matrix::identity(d2);
        } else {
            // A = Q^T D Q with log-spaced eigenvalues in [1, condition].
            Matrix q = gaussian_matrix(ts, d2, d2, 1.0);
            for (std::size_t c = 0; c < d2; ++c) {  // Gram-Schmidt columns
                for (std::size_t o = 0; o < c; ++o) {
                    double dot = 0.0;
                    for (std::size_t r = 0; r < d2; ++r) dot += q(r, c) * q(r, o);
                    for (std::size_t r = 0; r < d2; ++r) q(r, c) -= dot * q(r, o);
                }
                double norm = 0.0;
                for (std::size_t r = 0; r < d2; ++r) norm += q(r, c) * q(r, c);
                norm = std::sqrt(norm);
                for (std::size_t r = 0; r < d2; ++r) q(r, c) /= norm;
            }
            Matrix dq(d2, d2);
            for (std::size_t i = 0; i < d2; ++i) {
                const double lam =
                    d2 == 1 ? condition_number
                            : std::pow(condition_number,
                                       static_cast<double>(i) / static_cast<double>(d2 - 1));
                for (std::size_t j = 0; j < d2; ++j) dq(i, j) = lam * q(i, j);
            }
            hessian_ = matmul(transpose(q), dq);
        }
    }

    const std::vector<ParamDecl>& param_decls() const override { return decls_; }

    ParamSet init_params(std::uint64_t seed) const override {
        Stream s(Key{seed, StreamId::init, 0, 0, 0});
        ParamSet p;
        p.add("theta", true, gaussian_matrix(s, dim_, dim_, 1.0));
        return p;
    }

    std::pair<double, ParamSet> loss_and_grad(const ParamSet& theta, const BatchKey& key,
                                              const std::vector<long>& examples) const override {
        if (examples.empty()) throw ContractError("quadratic_bowl: empty batch");
        const Matrix& t = theta.by_name("theta").value;
        const std::size_t d2 = dim_ * dim_;

        std::vector<double> err(d2);
        for (std::size_t i = 0; i < d2; ++i) err[i] = t[i] - target_[i];

        double loss = 0.0;
        Matrix grad(dim_, dim_);
        for (std::size_t i = 0; i < d2; ++i) {
            double gi = 0.0;
            for (std::size_t j = 0; j < d2; ++j) gi += hessian_(i, j) * err[j];
            grad[i] = gi;
            loss += 0.5 * err[i] * gi;
        }

        if (noise_scale_ > 0.0) {
            const double inv_b = 1.0 / static_cast<double>(examples.size());
            for (long e : examples) {
                Stream s(Key{key.seed, StreamId::data, static_cast<std::uint64_t>(key.round),
                             static_cast<std::uint64_t>(key.step), static_cast<std::uint64_t>(e)});
                for (std::size_t i = 0; i < d2; ++i) grad[i] += inv_b * noise_scale_ * s.next_gaussian();
            }
        }

        ParamSet g;
        g.add("theta", true, std::move(grad));
        return {loss, std::move(g)};
    }

    double eval_loss(const ParamSet& theta, std::uint64_t) const override {
        // The bowl's loss is data-independent; evaluation is exact.
        const Matrix& t = theta.by_name("theta").value;
        const std::size_t d2 = dim_ * dim_;
        double loss = 0.0;
        for (std::size_t i = 0; i < d2; ++i) {
            double gi = 0.0;
            for (std::size_t j = 0; j < d2; ++j) gi += hessian_(i, j) * (t[j] - target_[j]);
            loss += 0.5 * (t[i] - target_[i]) * gi;
        }
        return loss;
    }

    std::optional<double> optimum_loss() const override { return 0.0; }

    std::optional<ParamSet> optimum_params() const override {
        ParamSet p;
        p.add("theta", true, target_);
        return p;
    }

  private:
    std::size_t dim_;
    double noise_scale_;
    std::uint64_t task_seed_;
    std::vector<ParamDecl> decls_;
    Matrix target_;
    Matrix hessian_;
};

class TwoLayerMlp final : public ModelTask {
  public:
    TwoLayerMlp(int in_dim, int hidden_dim, int out_dim, std::uint64_t task_seed,
                double label_noise)
        : in_(static_cast<std::size_t>(in_dim)),
          hid_(static_cast<std::size_t>(hidden_dim)),
          out_(static_cast<std::size_t>(out_dim)),
          label_noise_(label_noise) {
        if (in_dim < 1 || hidden_dim < 1 || out_dim < 1)
            throw ContractError("two_layer_mlp: dims must be >= 1");
        if (label_noise < 0.0) throw ContractError("two_layer_mlp: label_noise must be >= 0");
        decls_ = {{"w1", hid_, in_, true},
                  {"b1", hid_, 1, false},
                  {"w2", out_, hid_, true},
                  {"b2", out_, 1, false}};
        Stream ts(Key{task_seed, StreamId::task, 0, 0, 0});
        teacher_.add("w1", true, gaussian_matrix(ts, hid_, in_, 1.0 / std::sqrt(static_cast<double>(in_))));
        teacher_.add("b1", false, gaussian_matrix(ts, hid_, 1, 0.1));
        teacher_.add("w2", true, gaussian_matrix(ts, out_, hid_, 1.0 / std::sqrt(static_cast<double>(hid_))));
        teacher_.add("b2", false, gaussian_matrix(ts, out_, 1, 0.1));
    }

    const std::vector<ParamDecl>& param_decls() const override { return decls_; }

    ParamSet init_params(std::uint64_t seed) const override {
        Stream s(Key{seed, StreamId::init, 0, 0, 0});
        ParamSet p;
        p.add("w1", true, gaussian_matrix(s, hid_, in_, 1.0 / std::sqrt(static_cast<double>(in_))));
        p.add("b1", false, Matrix(hid_, 1));
        p.add("w2", true, gaussian_matrix(s, out_, hid_, 1.0 / std::sqrt(static_cast<double>(hid_))));
        p.add("b2", false, Matrix(out_, 1));
        return p;
    }

    std::pair<double, ParamSet> loss_and_grad(const ParamSet& theta, const BatchKey& key,
                                              const std::vector<long>& examples) const override {
        if (examples.empty()) throw ContractError("two_layer_mlp: empty batch");
        ParamSet grads = theta.zeros_like();
        double loss = 0.0;
        for (long e : examples) {
            Stream s(Key{key.seed, StreamId::data, static_cast<std::uint64_t>(key.round),
                         static_cast<std::uint64_t>(key.step), static_cast<std::uint64_t>(e)});
            std::vector<double> x, y;
            make_example(s, x, y);
            loss += accumulate_example(theta, x, y, grads);
        }
        const double inv_b = 1.0 / static_cast<double>(examples.size());
        for (auto& g : grads)
            for (std::size_t i = 0; i < g.value.size(); ++i) g.value[i] *= inv_b;
        return {loss * inv_b, std::move(grads)};
    }

    double eval_loss(const ParamSet& theta, std::uint64_t seed) const override {
        double loss = 0.0;
        for (std::size_t e = 0; e < kEvalBatch; ++e) {
            Stream s(Key{seed, StreamId::eval, 0, 0, e});
            std::vector<double> x, y;
            make_example(s, x, y);
            loss += forward_loss(theta, x, y);
        }
        return loss / static_cast<double>(kEvalBatch);
    }

    std::pair<double, ParamSet> loss_and_grad_inputs(
        const ParamSet& theta, const std::vector<std::vector<double>>& xs) const override {
        if (xs.empty()) throw ContractError("two_layer_mlp: empty batch");
        ParamSet grads = theta.zeros_like();
        double loss = 0.0;
        for (const auto& x : xs) {
            if (x.size() != in_) throw ContractError("two_layer_mlp: input dimension mismatch");
            // probing seam: clean teacher targets, no label noise
            std::vector<double> a1, y;
            forward(teacher_, x, a1, y);
            loss += accumulate_example(theta, x, y, grads);
        }
        const double inv_b = 1.0 / static_cast<double>(xs.size());
        for (auto& g : grads)
            for (std::size_t i = 0; i < g.value.size(); ++i) g.value[i] *= inv_b;
        return {loss * inv_b, std::move(grads)};
    }

    std::optional<double> optimum_loss() const override {
        if (label_noise_ == 0.0) return 0.0;
        return std::nullopt;  // the sampled floor of a noisy-label eval set is not closed-form
    }
    std::optional<ParamSet> optimum_params() const override { return teacher_; }

  private:
    void forward(const ParamSet& p, const std::vector<double>& x, std::vector<double>& a1,
                 std::vector<double>& z2) const {
        const Matrix& w1 = p.by_name("w1").value;
        const Matrix& b1 = p.by_name("b1").value;
        const Matrix& w2 = p.by_name("w2").value;
        const Matrix& b2 = p.by_name("b2").value;
        a1.assign(hid_, 0.0);
        for (std::size_t h = 0; h < hid_; ++h) {
            double z = b1[h];
            for (std::size_t i = 0; i < in_; ++i) z += w1(h, i) * x[i];
            a1[h] = std::tanh(z);
        }
        z2.assign(out_, 0.0);
        for (std::size_t o = 0; o < out_; ++o) {
            double z = b2[o];
            for (std::size_t h = 0; h < hid_; ++h) z += w2(o, h) * a1[h];
            z2[o] = z;
        }
    }

    // Draws an example from the stream: inputs first, then (only when
    // configured) the label-noise draws, so a zero noise scale reproduces the
    // noise-free stream exactly.
    void make_example(Stream& s, std::vector<double>& x, std::vector<double>& y) const {
        x.resize(in_);
        for (auto& v : x) v = s.next_gaussian();
        std::vector<double> a1;
        forward(teacher_, x, a1, y);
        if (label_noise_ > 0.0)
            for (auto& v : y) v += label_noise_ * s.next_gaussian();
    }

    double forward_loss(const ParamSet& p, const std::vector<double>& x,
                        const std::vector<double>& y) const {
        std::vector<double> a1, z2;
        forward(p, x, a1, z2);
        double l = 0.0;
        for (std::size_t o = 0; o < out_; ++o) {
            const double d = z2[o] - y[o];
            l += 0.5 * d * d;
        }
        return l;
    }

    double accumulate_example(const ParamSet& p, const std::vector<double>& x,
                              const std::vector<double>& ty, ParamSet& grads) const {
        std::vector<double> a1, z2;
        forward(p, x, a1, z2);

        const Matrix& w2 = p.by_name("w2").value;
        Matrix& gw1 = grads.value_of("w1");
        Matrix& gb1 = grads.value_of("b1");
        Matrix& gw2 = grads.value_of("w2");
        Matrix& gb2 = grads.value_of("b2");

        double loss = 0.0;
        std::vector<double> d2(out_);
        for (std::size_t o = 0; o < out_; ++o) {
            d2[o] = z2[o] - ty[o];
            loss += 0.5 * d2[o] * d2[o];
        }
        for (std::size_t o = 0; o < out_; ++o) {
            gb2[o] += d2[o];
            for (std::size_t h = 0; h < hid_; ++h) gw2(o, h) += d2[o] * a1[h];
        }
        for (std::size_t h = 0; h < hid_; ++h) {
            double back = 0.0;
            for (std::size_t o = 0; o < out_; ++o) back += w2(o, h) * d2[o];
            const double d1 = back * (1.0 - a1[h] * a1[h]);
            gb1[h] += d1;
            for (std::size_t i = 0; i < in_; ++i) gw1(h, i) += d1 * x[i];
        }
        return loss;
    }

    std::size_t in_, hid_, out_;
    double label_noise_;
    std::vector<ParamDecl> decls_;
    ParamSet teacher_;
};

}  // namespace

std::unique_ptr<ModelTask> quadratic_bowl(int dim, double condition_number, std::uint64_t task_seed,
                                          double noise_scale) {
    return std::make_unique<QuadraticBowl>(dim, condition_number, task_seed, noise_scale);
}

std::unique_ptr<ModelTask> two_layer_mlp(int in_dim, int hidden_dim, int out_dim,
                                         std::uint64_t task_seed, double label_noise) {
    return std::make_unique<TwoLayerMlp>(in_dim, hidden_dim, out_dim, task_seed, label_noise);
}

}  // namespace muloco
