#include <doctest.h>

#include <cmath>

#include "muloco/analytics.hpp"
#include "muloco/rng.hpp"

using namespace muloco;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    rng::Stream s(rng::Key{seed, rng::StreamId::audit, rows, cols, 0});
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = s.next_gaussian();
    return m;
}

Matrix random_orthonormal_factor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    return orthonormal_factor(svd(random_matrix(rows, cols, seed)));
}

}  // namespace

TEST_CASE("top-S percent mapping") {
    CHECK(top_s_from_percent(5.0, 12) == 1);   // round(0.6) with the >=1 floor
    CHECK(top_s_from_percent(5.0, 100) == 5);
    CHECK(top_s_from_percent(100.0, 7) == 7);
    CHECK(top_s_from_percent(0.001, 64) == 1);
}

TEST_CASE("interference gap of identical matrices vanishes") {
    const Matrix a = random_matrix(6, 4, 1);
    for (int s : {1, 2, 4})
        CHECK(std::abs(interference_gap({a, a, a}, s)) < 1e-12);
}

TEST_CASE("interference gap of orthogonal diagonal pair") {
    const Matrix a{{1, 0}, {0, 0}};
    const Matrix b{{0, 0}, {0, 1}};
    // mean = I/2 with both singular values 1/2
    CHECK(interference_gap({a, b}, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(interference_gap({a, b}, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("interference gap is non-negative on random inputs") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        rng::Stream pick(rng::Key{seed, rng::StreamId::audit, 1, 0, 0});
        const std::size_t rows = 2 + pick.next_u64() % 8;
        const std::size_t cols = 2 + pick.next_u64() % 8;
        const std::size_t n = 1 + pick.next_u64() % 6;
        std::vector<Matrix> deltas;
        for (std::size_t i = 0; i < n; ++i)
            deltas.push_back(random_matrix(rows, cols, 1000 + 10 * seed + i));
        const int s = 1 + static_cast<int>(pick.next_u64() % std::min(rows, cols));
        CHECK(interference_gap(deltas, s) >= -1e-9);
    }
}

TEST_CASE("interference gap contract violations") {
    CHECK_THROWS_AS(interference_gap({}, 1), ContractError);
    CHECK_THROWS_AS(interference_gap({Matrix(2, 2), Matrix(3, 2)}, 1), ContractError);
    CHECK_THROWS_AS(interference_gap({Matrix(2, 2)}, 3), ContractError);
    CHECK_THROWS_AS(interference_gap({Matrix(2, 2)}, 0), ContractError);
}

TEST_CASE("nuclear audit: single orthonormal step") {
    const Matrix psi = random_orthonormal_factor(5, 3, 2);
    const AuditRecord rec = nuclear_decomposition_audit({{0, 1, 1.0, psi}}, psi, 1);
    const double r = 3.0;
    CHECK(rec.lhs_nuclear == doctest::Approx(r).epsilon(1e-9));
    CHECK(rec.rhs_general == doctest::Approx(r).epsilon(1e-9));
    CHECK(rec.rhs_orthonormal == doctest::Approx(r).epsilon(1e-9));
    CHECK(rec.rel_discrepancy < 1e-9);
    CHECK_FALSE(rec.degenerate);
}

TEST_CASE("nuclear audit identity holds for arbitrary step matrices") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const int workers = 2;
        const int steps_per_worker = 3;
        std::vector<AuditStep> steps;
        Matrix psi(6, 4);
        rng::Stream alpha_stream(rng::Key{seed, rng::StreamId::audit, 2, 0, 0});
        for (int k = 0; k < workers; ++k)
            for (int h = 0; h < steps_per_worker; ++h) {
                const double alpha = 0.01 + 0.2 * alpha_stream.next_uniform();
                const Matrix m =
                    random_matrix(6, 4, 3000 + seed * 100 + static_cast<std::uint64_t>(k * 10 + h));
                for (std::size_t i = 0; i < psi.size(); ++i)
                    psi[i] += alpha * m[i] / static_cast<double>(workers);
                steps.push_back({k, h + 1, alpha, m});
            }
        const AuditRecord rec = nuclear_decomposition_audit(steps, psi, workers);
        CHECK(rec.rel_discrepancy < 1e-9);
    }
}

TEST_CASE("nuclear audit simplified form for orthonormalized steps") {
    const int workers = 2;
    std::vector<AuditStep> steps;
    Matrix psi(8, 5);
    for (int k = 0; k < workers; ++k)
        for (int h = 0; h < 4; ++h) {
            const Matrix m =
                random_orthonormal_factor(8, 5, 40 + static_cast<std::uint64_t>(10 * k + h));
            for (std::size_t i = 0; i < psi.size(); ++i)
                psi[i] += 0.1 * m[i] / static_cast<double>(workers);
            steps.push_back({k, h + 1, 0.1, m});
        }
    const AuditRecord rec = nuclear_decomposition_audit(steps, psi, workers);
    CHECK(rec.rel_discrepancy < 1e-9);
    // exactly orthonormal steps: the simplified form coincides
    CHECK(std::abs(rec.rhs_orthonormal - rec.lhs_nuclear) <= 1e-9 * rec.lhs_nuclear);
}

TEST_CASE("nuclear audit flags exact cancellation as degenerate") {
    const Matrix m = random_matrix(4, 4, 50);
    Matrix neg = m;
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
    const AuditRecord rec =
        nuclear_decomposition_audit({{0, 1, 1.0, m}, {1, 1, 1.0, neg}}, Matrix(4, 4), 2);
    CHECK(rec.degenerate);
    CHECK(rec.lhs_nuclear == 0.0);
    CHECK(rec.rhs_general == 0.0);
}

TEST_CASE("nuclear audit rejects inconsistent constituents") {
    const Matrix m = random_matrix(4, 4, 60);
    CHECK_THROWS_AS(nuclear_decomposition_audit({{0, 1, 1.0, m}}, random_matrix(4, 4, 61), 1),
                    ContractError);
}

TEST_CASE("alignment report on a run with identical workers") {
    const auto task = quadratic_bowl(3, 4.0, 70, 0.0);  // noiseless: workers coincide
    RunConfig cfg;
    cfg.workers = 2;
    cfg.inner_steps = 4;
    cfg.rounds = 2;
    cfg.global_batch = 8;
    cfg.seed = 5;
    cfg.inner.algorithm = Algorithm::adamw;
    cfg.inner.lr = 0.05;
    cfg.log.pseudogradients = true;
    cfg.log.worker_deltas = true;
    cfg.log.step_records = true;
    const RunResult res = run(cfg, *task, 1);

    const AlignmentReport rep = alignment_report(res, &res);
    bool saw_delta = false, saw_ref = false, saw_step = false;
    for (const auto& row : rep.rows) {
        if (row.metric == "delta_vs_psi") {
            saw_delta = true;
            CHECK(row.value == doctest::Approx(1.0).epsilon(1e-12));
        }
        if (row.metric == "psi_vs_reference") {
            saw_ref = true;  // reference is the run itself
            CHECK(row.value == doctest::Approx(1.0).epsilon(1e-12));
        }
        if (row.metric == "step_vs_psi") {
            saw_step = true;
            CHECK(row.value >= -1.0);
            CHECK(row.value <= 1.0);
        }
    }
    CHECK(saw_delta);
    CHECK(saw_ref);
    CHECK(saw_step);
    CHECK_FALSE(rep.summary.empty());
}

TEST_CASE("alignment report flags zero tensors instead of producing NaN") {
    RunResult res;
    RoundLog rl;
    rl.round = 0;
    rl.psi_snapshots.push_back({"w", Matrix(2, 2)});  // zero pseudogradient
    rl.delta_snapshots.push_back({"w", 0, random_matrix(2, 2, 80)});
    res.rounds.push_back(std::move(rl));
    const AlignmentReport rep = alignment_report(res);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].metric == "delta_vs_psi_degenerate");
    for (const auto& row : rep.rows) CHECK(std::isfinite(row.value));
}

TEST_CASE("alignment report requires snapshots") {
    RunResult res;
    res.rounds.emplace_back();
    CHECK_THROWS_AS(alignment_report(res), ContractError);
}

TEST_CASE("spectra produce per-worker singular values and gaps") {
    const auto task = two_layer_mlp(6, 5, 4, 71);
    RunConfig cfg;
    cfg.workers = 4;
    cfg.inner_steps = 5;
    cfg.rounds = 1;
    cfg.global_batch = 16;
    cfg.seed = 6;
    cfg.inner.algorithm = Algorithm::muon;
    cfg.inner.lr = 0.05;
    cfg.log.pseudogradients = true;
    cfg.log.worker_deltas = true;
    const RunResult res = run(cfg, *task, 1);

    const SpectralReport rep = spectra(res, {5.0, 50.0});
    CHECK(!rep.singular_values.empty());
    // every parameter gets a gap entry per requested percentage
    CHECK(rep.gaps.size() == 2 * 4);  // 2 percents x 4 parameters
    for (const auto& g : rep.gaps) CHECK(g.gap >= -1e-9);
    for (const auto& sv : rep.singular_values) CHECK(sv.value >= 0.0);
}

TEST_CASE("step norm statistics separate muon from adamw variability") {
    const auto task = two_layer_mlp(16, 12, 12, 72);
    RunConfig cfg;
    cfg.workers = 4;
    cfg.inner_steps = 30;
    cfg.rounds = 2;
    cfg.global_batch = 32;
    cfg.seed = 7;
    cfg.inner.lr = 0.05;
    cfg.lr_schedule = LrSchedule::constant;
    cfg.log.step_norms = true;

    cfg.inner.algorithm = Algorithm::muon;
    const RunResult muon_run = run(cfg, *task, 1);
    cfg.inner.algorithm = Algorithm::adamw;
    cfg.inner.lr = 0.01;
    const RunResult adamw_run = run(cfg, *task, 1);

    // Round 1 measures a warmed momentum state; round 0 carries the
    // cold-start transient, which is not the stability claim.
    const auto muon_stats = step_norm_stats(muon_run);
    const auto adamw_stats = step_norm_stats(adamw_run);
    int checked = 0;
    for (const auto& ms : muon_stats) {
        if (ms.round == 0 || (ms.param != "w1" && ms.param != "w2")) continue;
        CHECK(ms.cv < 0.05);  // orthonormalized steps have stable norms
        for (const auto& as : adamw_stats)
            if (as.param == ms.param && as.round == ms.round) {
                CHECK(ms.cv < as.cv);
                ++checked;
            }
    }
    CHECK(checked == 2);
    CHECK(!step_norm_trace(muon_run).empty());
}
