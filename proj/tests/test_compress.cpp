#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "muloco/compress.hpp"
#include "muloco/rng.hpp"

using namespace muloco;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    rng::Stream s(rng::Key{seed, rng::StreamId::task, rows, cols, 3});
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = scale * s.next_gaussian();
    return m;
}

CompressorSpec quant_spec(int bits, QuantScheme scheme, QuantGranularity gran) {
    CompressorSpec s;
    s.kind = CompressorKind::quant;
    s.bits = bits;
    s.scheme = scheme;
    s.granularity = gran;
    return s;
}

double mse(const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("topk keeps the k% largest magnitudes") {
    const Matrix w{{1, -5}, {3, 0.5}};
    const Matrix out = topk_decode(topk_encode(w, 50.0));
    CHECK(bitwise_equal(out, Matrix{{0, -5}, {3, 0}}));
}

TEST_CASE("topk at 100% is a bitwise roundtrip") {
    const Matrix w = random_matrix(7, 5, 1);
    CHECK(bitwise_equal(topk_decode(topk_encode(w, 100.0)), w));
}

TEST_CASE("topk tie-break keeps the lowest flat index") {
    const Matrix w{{2, 2}, {2, 2}};
    const EncodedDelta e = topk_encode(w, 25.0);
    REQUIRE(e.indices.size() == 1);
    CHECK(e.indices[0] == 0);
    const Matrix out = topk_decode(e);
    CHECK(out[0] == 2.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("topk support size holds for random inputs and percentages") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        rng::Stream s(rng::Key{seed, rng::StreamId::task, 0, 0, 4});
        const std::size_t rows = 1 + static_cast<std::size_t>(s.next_u64() % 12);
        const std::size_t cols = 1 + static_cast<std::size_t>(s.next_u64() % 12);
        const double k_pct = 100.0 * s.next_uniform_open();
        const Matrix w = random_matrix(rows, cols, 100 + seed);
        const Matrix out = topk_decode(topk_encode(w, k_pct));
        const auto expected = std::max<long>(
            1, std::llround(k_pct / 100.0 * static_cast<double>(rows * cols)));
        long nonzeros = 0;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] != 0.0) ++nonzeros;
        // all-kept entries are bit-exact
        CHECK(nonzeros <= expected);  // zeros in w may reduce the visible support
        long kept_exact = 0;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] != 0.0) {
                CHECK(out[i] == w[i]);
                ++kept_exact;
            }
        const EncodedDelta e = topk_encode(w, k_pct);
        CHECK(static_cast<long>(e.indices.size()) == expected);
    }
}

TEST_CASE("constant tensors roundtrip exactly under every quantizer") {
    Matrix w(3, 4);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = -2.75;
    for (int bits : {2, 4, 8})
        for (auto scheme : {QuantScheme::linear, QuantScheme::statistical})
            for (auto gran : {QuantGranularity::global, QuantGranularity::rowwise}) {
                const CompressorSpec spec = quant_spec(bits, scheme, gran);
                CHECK(bitwise_equal(quant_decode(quant_encode(w, spec)), w));
            }
}

TEST_CASE("linear quantization error is bounded by half a bin") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Matrix w = random_matrix(6, 7, 200 + seed);
        for (int bits : {2, 4, 8}) {
            const CompressorSpec spec = quant_spec(bits, QuantScheme::linear, QuantGranularity::global);
            const Matrix out = quant_decode(quant_encode(w, spec));
            const auto [lo, hi] = std::minmax_element(w.data().begin(), w.data().end());
            const double bound = (*hi - *lo) / (2.0 * (std::pow(2.0, bits) - 1.0));
            for (std::size_t i = 0; i < w.size(); ++i)
                CHECK(std::abs(out[i] - w[i]) <= bound * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("rowwise linear quantization bounds each row by its own range") {
    const Matrix w = random_matrix(5, 9, 321);
    const CompressorSpec spec = quant_spec(4, QuantScheme::linear, QuantGranularity::rowwise);
    const Matrix out = quant_decode(quant_encode(w, spec));
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double lo = w(r, 0), hi = w(r, 0);
        for (std::size_t c = 0; c < w.cols(); ++c) {
            lo = std::min(lo, w(r, c));
            hi = std::max(hi, w(r, c));
        }
        const double bound = (hi - lo) / (2.0 * 15.0);
        for (std::size_t c = 0; c < w.cols(); ++c)
            CHECK(std::abs(out(r, c) - w(r, c)) <= bound * (1.0 + 1e-12));
    }
}

TEST_CASE("statistical 2-bit quantization recovers well-separated clusters") {
    const Matrix w(1, 8, {-3, -3, -3, 1, 1, 5, 5, 5});
    const CompressorSpec spec = quant_spec(2, QuantScheme::statistical, QuantGranularity::global);
    const EncodedDelta e = quant_encode(w, spec);
    const Matrix out = quant_decode(e);
    CHECK(bitwise_equal(out, w));  // zero error on the cluster values
    CHECK(std::count(e.codebook.begin(), e.codebook.end(), -3.0) >= 1);
    CHECK(std::count(e.codebook.begin(), e.codebook.end(), 1.0) >= 1);
    CHECK(std::count(e.codebook.begin(), e.codebook.end(), 5.0) >= 1);
}

TEST_CASE("statistical quantization beats linear in MSE at 2 bits") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix w = random_matrix(8, 8, 400 + seed);
        const Matrix lin = quant_decode(
            quant_encode(w, quant_spec(2, QuantScheme::linear, QuantGranularity::global)));
        const Matrix stat = quant_decode(
            quant_encode(w, quant_spec(2, QuantScheme::statistical, QuantGranularity::global)));
        CHECK(mse(stat, w) <= mse(lin, w) + 1e-15);
    }
}

TEST_CASE("error feedback with a lossless codec collapses to the identity") {
    CompressorSpec spec;  // none
    spec.error_feedback = true;
    const Matrix delta = random_matrix(4, 4, 5);
    Matrix residual(4, 4);
    const EncodedDelta e = ef_wrap(delta, residual, spec);
    CHECK(bitwise_equal(decode(e), delta));
    CHECK(bitwise_equal(residual, Matrix(4, 4)));
}

TEST_CASE("error feedback worked example with top-50%") {
    CompressorSpec spec;
    spec.kind = CompressorKind::topk;
    spec.k_pct = 50.0;
    spec.error_feedback = true;
    spec.ef_beta = 1.0;
    const Matrix delta{{1, -5}, {3, 0.5}};
    Matrix residual(2, 2);
    const EncodedDelta e = ef_wrap(delta, residual, spec);
    CHECK(bitwise_equal(decode(e), Matrix{{0, -5}, {3, 0}}));
    CHECK(bitwise_equal(residual, Matrix{{1, 0}, {0, 0.5}}));
}

TEST_CASE("error feedback residual identity holds exactly over rounds") {
    CompressorSpec spec;
    spec.kind = CompressorKind::topk;
    spec.k_pct = 30.0;
    spec.error_feedback = true;
    spec.ef_beta = 0.9;
    Matrix residual(5, 5);
    for (std::uint64_t round = 0; round < 8; ++round) {
        const Matrix delta = random_matrix(5, 5, 600 + round);
        Matrix expected_acc(5, 5);
        for (std::size_t i = 0; i < expected_acc.size(); ++i)
            expected_acc[i] = spec.ef_beta * residual[i] + delta[i];
        const EncodedDelta e = ef_wrap(delta, residual, spec);
        const Matrix emitted = decode(e);
        CHECK(bitwise_equal(residual, expected_acc - emitted));
    }
}

TEST_CASE("collective reduce of uncompressed deltas is the exact average") {
    const Matrix a = random_matrix(3, 3, 7);
    const Matrix b = random_matrix(3, 3, 8);
    CompressorSpec spec;
    const auto [avg, stats] = collective_reduce({encode(a, spec), encode(b, spec)}, spec);
    Matrix expected(3, 3);
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = (a[i] + b[i]) / 2.0;
    CHECK(bitwise_equal(avg, expected));
    CHECK(stats.workers == 2);
    CHECK(stats.sent_bytes_per_worker == 4.0 * 9);
    CHECK(stats.received_bytes_per_worker == doctest::Approx(4.0 * 9));  // 2(K-1)/K = 1
}

TEST_CASE("collective reduce of constant quantized deltas is exact") {
    Matrix w(2, 3);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.25;
    const CompressorSpec spec = quant_spec(4, QuantScheme::linear, QuantGranularity::global);
    const auto [avg, stats] = collective_reduce({quant_encode(w, spec), quant_encode(w, spec)}, spec);
    CHECK(bitwise_equal(avg, w));
}

TEST_CASE("two-stage quantized collective matches the stated pipeline and error bound") {
    const CompressorSpec spec = quant_spec(8, QuantScheme::linear, QuantGranularity::global);
    std::vector<EncodedDelta> encoded;
    std::vector<Matrix> originals;
    const int workers = 8;
    for (int k = 0; k < workers; ++k) {
        Matrix w = random_matrix(6, 6, 700 + static_cast<std::uint64_t>(k));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::tanh(w[i]);  // values in [-1, 1]
        originals.push_back(w);
        encoded.push_back(quant_encode(w, spec));
    }
    const auto [result, stats] = collective_reduce(encoded, spec);

    // Pipeline replay: decode, average, re-quantize, decode.
    Matrix avg(6, 6);
    double stage1_bound = 0.0;
    for (int k = 0; k < workers; ++k) {
        const Matrix d = quant_decode(encoded[static_cast<std::size_t>(k)]);
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += d[i];
        const auto [lo, hi] = std::minmax_element(originals[static_cast<std::size_t>(k)].data().begin(),
                                                  originals[static_cast<std::size_t>(k)].data().end());
        stage1_bound += (*hi - *lo) / (2.0 * 255.0);
    }
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] /= workers;
    stage1_bound /= workers;
    const Matrix expected = quant_decode(quant_encode(avg, spec));
    CHECK(bitwise_equal(result, expected));

    // Error vs the uncompressed mean: stage-1 mean bound plus stage-2 half bin.
    Matrix true_mean(6, 6);
    for (const auto& w : originals)
        for (std::size_t i = 0; i < true_mean.size(); ++i) true_mean[i] += w[i];
    for (std::size_t i = 0; i < true_mean.size(); ++i) true_mean[i] /= workers;
    const auto [lo, hi] = std::minmax_element(avg.data().begin(), avg.data().end());
    const double stage2_bound = (*hi - *lo) / (2.0 * 255.0);
    for (std::size_t i = 0; i < true_mean.size(); ++i)
        CHECK(std::abs(result[i] - true_mean[i]) <= (stage1_bound + stage2_bound) * (1.0 + 1e-9));

    // a2a reduce-scatter + all-gather byte model
    CHECK(stats.received_bytes_per_worker ==
          doctest::Approx(2.0 * 7.0 / 8.0 * encoded[0].logical_bytes));
}

TEST_CASE("comm_bytes closed forms") {
    CompressorSpec none;
    const WireBytes fp32 = comm_bytes(none, 4, 4, 4);
    CHECK(fp32.sent == 64.0);
    CHECK(fp32.received == doctest::Approx(2.0 * 3.0 / 4.0 * 64.0));

    const WireBytes q4 = comm_bytes(quant_spec(4, QuantScheme::linear, QuantGranularity::global),
                                    4, 4, 4);
    CHECK(q4.sent == 8.0 + 8.0);
    CHECK(q4.received == doctest::Approx(1.5 * 16.0));

    const WireBytes q4row = comm_bytes(quant_spec(4, QuantScheme::linear, QuantGranularity::rowwise),
                                       4, 4, 4);
    CHECK(q4row.sent == 8.0 + 8.0 * 4);

    CompressorSpec topk;
    topk.kind = CompressorKind::topk;
    topk.k_pct = 25.0;
    const WireBytes tk = comm_bytes(topk, 4, 4, 4);
    CHECK(tk.sent == doctest::Approx(4.0 * 4.5));  // 4 entries * (4 + 0.5) bytes
    CHECK(tk.received == doctest::Approx(3.0 * 18.0));

    CHECK(comm_bytes(none, 4, 4, 1).received == 0.0);
}

TEST_CASE("serialization round trips bit-exactly across kinds") {
    const Matrix w = random_matrix(5, 6, 900);
    std::vector<CompressorSpec> specs;
    specs.emplace_back();
    CompressorSpec tk;
    tk.kind = CompressorKind::topk;
    tk.k_pct = 37.5;
    specs.push_back(tk);
    specs.push_back(quant_spec(2, QuantScheme::statistical, QuantGranularity::rowwise));
    specs.push_back(quant_spec(8, QuantScheme::linear, QuantGranularity::global));

    for (const auto& spec : specs) {
        const EncodedDelta e = encode(w, spec);
        const EncodedDelta back = EncodedDelta::deserialize(e.serialize());
        CHECK(bitwise_equal(decode(back), decode(e)));
        CHECK(back.logical_bytes == e.logical_bytes);
    }
}

TEST_CASE("spec validation and losslessness") {
    CompressorSpec bad = quant_spec(3, QuantScheme::linear, QuantGranularity::global);
    CHECK_THROWS_AS(bad.validate(), ContractError);
    CompressorSpec tk;
    tk.kind = CompressorKind::topk;
    tk.k_pct = 0.0;
    CHECK_THROWS_AS(tk.validate(), ContractError);

    CompressorSpec none;
    CHECK(is_lossless(none));
    tk.k_pct = 100.0;
    CHECK(is_lossless(tk));
    tk.k_pct = 99.0;
    CHECK_FALSE(is_lossless(tk));
    CHECK_FALSE(is_lossless(quant_spec(8, QuantScheme::linear, QuantGranularity::global)));
}
