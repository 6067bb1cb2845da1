#include <doctest.h>

#include <cmath>

#include "muloco/linalg.hpp"
#include "muloco/rng.hpp"
#include "oracles.hpp"

using namespace muloco;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    rng::Stream s(rng::Key{seed, rng::StreamId::task, rows, cols, 0});
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = s.next_gaussian();
    return m;
}

Matrix reconstruct(const Svd& s) {
    Matrix us = s.u;
    for (std::size_t r = 0; r < us.rows(); ++r)
        for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= s.sigma[c];
    return matmul(us, transpose(s.v));
}

double max_offdiag_gram(const Matrix& u) {
    const Matrix g = matmul(transpose(u), u);
    double worst = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
            worst = std::max(worst, std::abs(g(r, c) - (r == c ? 1.0 : 0.0)));
    return worst;
}

// A fixed orthogonal 4x4 (scaled Hadamard-like) used by the Newton-Schulz test.
Matrix orthogonal4() {
    return 0.5 * Matrix{{1, 1, 1, 1}, {1, -1, 1, -1}, {1, 1, -1, -1}, {1, -1, -1, 1}};
}

}  // namespace

TEST_CASE("matrix construction rejects bad input") {
    CHECK_THROWS_AS(Matrix(0, 3), ContractError);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ContractError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), ContractError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::numeric_limits<double>::infinity()}), ContractError);
}

TEST_CASE("svd of the identity") {
    const Svd s = svd(Matrix::identity(3));
    for (double sv : s.sigma) CHECK(sv == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of a singular diagonal matrix") {
    const Svd s = svd(Matrix{{3, 0}, {0, 0}});
    CHECK(s.sigma[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(s.sigma[1] == doctest::Approx(0.0));
    CHECK(max_offdiag_gram(s.u) < 1e-9);  // completed column stays orthonormal
}

TEST_CASE("svd of a random 5x4 matrix against the eigenvalue oracle") {
    const Matrix a = random_matrix(5, 4, 11);
    const Svd s = svd(a);

    const double rel = frobenius_norm(reconstruct(s) - a) / frobenius_norm(a);
    CHECK(rel < 1e-9);
    CHECK(max_offdiag_gram(s.u) < 1e-9);
    CHECK(max_offdiag_gram(s.v) < 1e-9);
    for (std::size_t i = 0; i + 1 < s.sigma.size(); ++i) CHECK(s.sigma[i] >= s.sigma[i + 1]);

    // sigma^2 are the eigenvalues of A^T A; find those by characteristic
    // polynomial bisection, independently of the Jacobi path.
    const std::vector<double> eigs = oracles::symmetric_eigenvalues(matmul(transpose(a), a));
    REQUIRE(eigs.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        const double expected = std::sqrt(std::max(0.0, eigs[3 - i]));
        CHECK(s.sigma[i] == doctest::Approx(expected).epsilon(1e-7));
    }
}

TEST_CASE("svd reconstruction holds up to 64x64") {
    for (const auto [r, c] : {std::pair<std::size_t, std::size_t>{16, 9},
                              {9, 16},
                              {64, 64},
                              {33, 64}}) {
        const Matrix a = random_matrix(r, c, 100 + r + 2 * c);
        const Svd s = svd(a);
        CHECK(frobenius_norm(reconstruct(s) - a) <= 1e-9 * frobenius_norm(a));
    }
}

TEST_CASE("svd is deterministic") {
    const Matrix a = random_matrix(12, 7, 5);
    const Svd s1 = svd(a);
    const Svd s2 = svd(a);
    CHECK(bitwise_equal(s1.u, s2.u));
    CHECK(bitwise_equal(s1.v, s2.v));
    CHECK(s1.sigma == s2.sigma);
}

TEST_CASE("orthonormal factor identities") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Matrix a = random_matrix(10, 6, seed);
        const Svd s = svd(a);
        const Matrix star = orthonormal_factor(s);
        const double r = static_cast<double>(a.min_dim());
        CHECK(frobenius_norm(star) == doctest::Approx(std::sqrt(r)).epsilon(1e-12));
        // <A, UV^T>_F equals the nuclear norm.
        const double nn = nuclear_norm(a);
        CHECK(std::abs(frobenius_inner(a, star) - nn) <= 1e-9 * nn);
    }
}

TEST_CASE("newton_schulz on a scaled orthogonal matrix follows the scalar orbit") {
    const Matrix q = orthogonal4();
    for (double c : {0.01, 1.0, 250.0}) {
        const Matrix out = newton_schulz(c * q, 5);
        // All four singular values of X0 equal 1/2, so the output is exactly
        // the scalar orbit times Q.
        const double expected_factor = oracles::ns_orbit(0.5, 5);
        CHECK(frobenius_norm(out - expected_factor * q) < 1e-9);

        const Svd s = svd(out);
        for (double sv : s.sigma) {
            CHECK(sv >= 0.68);
            CHECK(sv <= 1.16);
        }
        const double dist = frobenius_norm(out - q);
        CHECK(dist == doctest::Approx(std::abs(expected_factor - 1.0) * frobenius_norm(q)).epsilon(1e-9));
        CHECK(dist <= 0.35 * frobenius_norm(q));
    }
}

TEST_CASE("newton_schulz convergence band matches the brute-force scan") {
    // Where the final band claims come from: the image of the 5-fold quintic.
    const auto [lo, hi] = oracles::ns_band(0.05, 1.0, 5);
    CHECK(lo >= 0.2);
    CHECK(hi <= 1.3);
}

TEST_CASE("newton_schulz on a wide random matrix lands inside the band") {
    const Matrix m = random_matrix(8, 16, 77);
    const Matrix out = newton_schulz(m, 5);
    CHECK(out.rows() == 8);
    CHECK(out.cols() == 16);

    const double norm = frobenius_norm(m);
    const Svd in = svd(m);
    const Svd s = svd(out);
    for (std::size_t i = 0; i < s.sigma.size(); ++i) {
        if (in.sigma[i] / norm < 0.05) continue;  // documented caveat near zero
        CHECK(s.sigma[i] >= 0.2);
        CHECK(s.sigma[i] <= 1.3);
    }
}

TEST_CASE("newton_schulz degenerate and error cases") {
    const Matrix zero(3, 5);
    CHECK(bitwise_equal(newton_schulz(zero, 5), zero));
    CHECK_THROWS_AS(newton_schulz(Matrix::identity(2), 0), ContractError);
}

TEST_CASE("newton_schulz applied twice does not widen the band") {
    for (std::uint64_t seed : {3u, 4u, 5u, 6u}) {
        const Matrix m = random_matrix(6, 6, seed);
        const Matrix once = newton_schulz(m, 5);
        const Matrix twice = newton_schulz(once, 5);
        double worst_once = 0.0, worst_twice = 0.0;
        for (double sv : svd(once).sigma) worst_once = std::max(worst_once, std::abs(sv - 1.0));
        for (double sv : svd(twice).sigma) worst_twice = std::max(worst_twice, std::abs(sv - 1.0));
        CHECK(worst_twice <= worst_once + 1e-12);
    }
}

TEST_CASE("norms and inner products") {
    const Matrix a{{1, 2}, {3, 4}};
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(nuclear_norm(Matrix{{2, 0}, {0, 1}}) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(frobenius_inner(Matrix::identity(2), Matrix{{0, 1}, {1, 0}}) == 0.0);
    CHECK_THROWS_AS(cosine_sim(a, Matrix(2, 2)), ContractError);
    CHECK_THROWS_AS(frobenius_inner(a, Matrix(3, 2)), ContractError);
}
