#include <doctest.h>

#include <cmath>

#include "muloco/inner_optim.hpp"
#include "muloco/rng.hpp"
#include "oracles.hpp"

using namespace muloco;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    rng::Stream s(rng::Key{seed, rng::StreamId::task, rows, cols, 1});
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = s.next_gaussian();
    return m;
}

OptimConfig adamw_cfg(double lr, double wd = 0.0) {
    OptimConfig c;
    c.algorithm = Algorithm::adamw;
    c.lr = lr;
    c.weight_decay = wd;
    return c;
}

OptimConfig muon_cfg(double lr, double wd = 0.0) {
    OptimConfig c;
    c.algorithm = Algorithm::muon;
    c.lr = lr;
    c.weight_decay = wd;
    return c;
}

}  // namespace

TEST_CASE("adamw first step matches the hand-evaluated bias-corrected formula") {
    const Matrix theta(1, 1);
    const Matrix grad{{1.0}};
    const OptimConfig cfg = adamw_cfg(0.1);
    const AdamwResult r = adamw_step(theta, grad, AdamwState::zeros(1, 1), cfg);

    // m=0.1 -> mhat=1; v=0.01 -> vhat=1; theta1 = -0.1 * 1/(1+1e-8).
    const double expected = -0.1 * (1.0 / (1.0 + 1e-8));
    CHECK(r.theta[0] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(r.theta[0] == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(r.state.step_count == 1);
    CHECK(r.state.m[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(r.state.v[0] == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("adamw reaches the unit-step limit on a constant gradient") {
    const OptimConfig cfg = adamw_cfg(0.05);
    Matrix theta(1, 2);
    const Matrix grad{{2.5, -0.3}};
    AdamwState st = AdamwState::zeros(1, 2);
    double last_step[2] = {0, 0};
    for (int i = 0; i < 400; ++i) {
        const AdamwResult r = adamw_step(theta, grad, st, cfg);
        last_step[0] = theta[0] - r.theta[0];
        last_step[1] = theta[1] - r.theta[1];
        theta = r.theta;
        st = r.state;
    }
    // Steps approach -alpha * sign(g) entrywise.
    CHECK(last_step[0] == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(last_step[1] == doctest::Approx(-0.05).epsilon(1e-6));
}

TEST_CASE("adamw zero learning rate leaves parameters untouched but updates moments") {
    const Matrix theta = random_matrix(3, 2, 1);
    const Matrix grad = random_matrix(3, 2, 2);
    const AdamwResult r = adamw_step(theta, grad, AdamwState::zeros(3, 2), adamw_cfg(0.0, 0.5));
    CHECK(bitwise_equal(r.theta, theta));
    CHECK(frobenius_norm(r.state.m) > 0.0);
    CHECK(frobenius_norm(r.state.v) > 0.0);
}

TEST_CASE("decoupled weight decay decomposes bitwise for both optimizers") {
    const double lr = 0.03, wd = 0.2;
    Matrix theta_a = random_matrix(4, 6, 3);
    Matrix theta_b = theta_a;

    SUBCASE("adamw") {
        AdamwState sa = AdamwState::zeros(4, 6), sb = sa;
        for (int i = 0; i < 20; ++i) {
            const Matrix g = random_matrix(4, 6, 100 + i);
            const AdamwResult ra = adamw_step(theta_a, g, sa, adamw_cfg(lr, wd));
            theta_a = ra.theta;
            sa = ra.state;
            const AdamwResult rb = adamw_step(theta_b, g, sb, adamw_cfg(lr, 0.0));
            theta_b = rb.theta;
            sb = rb.state;
            for (std::size_t k = 0; k < theta_b.size(); ++k) theta_b[k] *= 1.0 - lr * wd;
            REQUIRE(bitwise_equal(theta_a, theta_b));
        }
    }
    SUBCASE("muon") {
        MuonState sa = MuonState::zeros(4, 6), sb = sa;
        const double eta = muon_effective_lr(muon_cfg(lr), 4, 6);
        for (int i = 0; i < 10; ++i) {
            const Matrix g = random_matrix(4, 6, 200 + i);
            const MuonResult ra = muon_step(theta_a, g, sa, muon_cfg(lr, wd));
            theta_a = ra.theta;
            sa = ra.state;
            const MuonResult rb = muon_step(theta_b, g, sb, muon_cfg(lr, 0.0));
            theta_b = rb.theta;
            sb = rb.state;
            for (std::size_t k = 0; k < theta_b.size(); ++k) theta_b[k] *= 1.0 - eta * wd;
            REQUIRE(bitwise_equal(theta_a, theta_b));
        }
    }
}

TEST_CASE("muon pure weight decay when gradient and momentum are zero") {
    const Matrix theta = random_matrix(3, 3, 4);
    const Matrix zero(3, 3);
    const OptimConfig cfg = muon_cfg(0.1, 0.3);
    const double eta = muon_effective_lr(cfg, 3, 3);
    const MuonResult r = muon_step(theta, zero, MuonState::zeros(3, 3), cfg);
    Matrix expected = theta;
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] *= 1.0 - eta * 0.3;
    CHECK(bitwise_equal(r.theta, expected));
}

TEST_CASE("muon shape rescaling doubles the rate on a 2x8 matrix") {
    OptimConfig cfg = muon_cfg(0.07);
    CHECK(muon_effective_lr(cfg, 2, 8) == 2.0 * 0.07);
    cfg.lr_shape_rescale = false;
    CHECK(muon_effective_lr(cfg, 2, 8) == 0.07);
}

TEST_CASE("muon step equals the effective rate times the recomputed orthogonal factor") {
    const Matrix theta = random_matrix(5, 5, 6);
    const Matrix grad = random_matrix(5, 5, 7);
    const MuonState st{random_matrix(5, 5, 8)};
    const OptimConfig cfg = muon_cfg(0.2);
    const MuonResult r = muon_step(theta, grad, st, cfg);

    // Independent recomputation of the update path.
    Matrix momentum(5, 5);
    for (std::size_t i = 0; i < momentum.size(); ++i)
        momentum[i] = cfg.beta1 * st.m[i] + grad[i];
    CHECK(bitwise_equal(r.state.m, momentum));
    const Matrix o = newton_schulz(momentum, cfg.ns_iterations);
    const double eta = muon_effective_lr(cfg, 5, 5);
    const Matrix step = step_record(theta, r.theta);
    CHECK(frobenius_norm(step - eta * o) <= 1e-13 * frobenius_norm(step));
}

TEST_CASE("muon step norm follows the scalar-orbit prediction on a controlled spectrum") {
    // Momentum with singular values 1..6: after normalization they sit inside
    // the basin, so each output singular value is the scalar orbit of its input.
    const std::size_t n = 6;
    const Svd base = svd(random_matrix(n, n, 9));
    Matrix us = base.u;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) us(r, c) *= 1.0 + static_cast<double>(c);
    const Matrix m = matmul(us, transpose(base.v));

    const Matrix theta(n, n);
    const OptimConfig cfg = muon_cfg(0.1);
    const MuonResult r = muon_step(theta, m, MuonState::zeros(n, n), cfg);
    const Matrix step = step_record(theta, r.theta);
    const double eta = muon_effective_lr(cfg, n, n);

    const double norm = frobenius_norm(m);
    double expected_sq = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const double s_out = oracles::ns_orbit((1.0 + static_cast<double>(c)) / norm, 5);
        CHECK(s_out >= 0.68);
        CHECK(s_out <= 1.16);
        expected_sq += s_out * s_out;
    }
    const double expected_norm = eta * std::sqrt(expected_sq);
    CHECK(frobenius_norm(step) == doctest::Approx(expected_norm).epsilon(1e-9));
    const double root_r = std::sqrt(static_cast<double>(n));
    CHECK(frobenius_norm(step) / eta >= 0.68 * root_r);
    CHECK(frobenius_norm(step) / eta <= 1.16 * root_r);
}

TEST_CASE("step_record basics") {
    const Matrix theta = random_matrix(2, 3, 10);
    CHECK(bitwise_equal(step_record(theta, theta), Matrix(2, 3)));
    // alpha = 0 with decay > 0 is still a no-op under the decomposed update
    const AdamwResult r = adamw_step(theta, random_matrix(2, 3, 11), AdamwState::zeros(2, 3),
                                     adamw_cfg(0.0, 0.7));
    CHECK(bitwise_equal(step_record(theta, r.theta), Matrix(2, 3)));
    CHECK_THROWS_AS(step_record(theta, Matrix(3, 2)), ContractError);
}

TEST_CASE("optimizer steps are deterministic and enforce contracts") {
    const Matrix theta = random_matrix(3, 4, 12);
    const Matrix grad = random_matrix(3, 4, 13);
    const AdamwState st = AdamwState::zeros(3, 4);
    const AdamwResult a = adamw_step(theta, grad, st, adamw_cfg(0.01));
    const AdamwResult b = adamw_step(theta, grad, st, adamw_cfg(0.01));
    CHECK(bitwise_equal(a.theta, b.theta));

    CHECK_THROWS_AS(adamw_step(theta, Matrix(4, 3), st, adamw_cfg(0.01)), ContractError);
    CHECK_THROWS_AS(adamw_step(theta, grad, st, muon_cfg(0.01)), ContractError);
    CHECK_THROWS_AS(muon_step(theta, grad, MuonState::zeros(3, 4), adamw_cfg(0.01)), ContractError);
}
