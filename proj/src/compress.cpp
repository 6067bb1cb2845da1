#include "muloco/compress.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace muloco {

namespace {

constexpr int kLloydMaxIterations = 50;

double index_bits(std::size_t elements) {
    if (elements <= 1) return 0.0;
    return std::ceil(std::log2(static_cast<double>(elements)));
}

std::size_t topk_keep_count(double k_pct, std::size_t elements) {
    const auto kept = static_cast<std::size_t>(std::llround(k_pct / 100.0 * static_cast<double>(elements)));
    return std::max<std::size_t>(1, std::min(kept, elements));
}

double quant_metadata_bytes(QuantGranularity granularity, std::size_t rows) {
    return granularity == QuantGranularity::global ? 8.0 : 8.0 * static_cast<double>(rows);
}

// Per-worker received-volume factor of the modeled collective: ring
// all-reduce for dense, all-to-all reduce-scatter + ring all-gather for
// quantized, full all-gather for top-k.
double collective_factor(const CompressorSpec& spec, int workers) {
    const double k = static_cast<double>(workers);
    switch (spec.kind) {
        case CompressorKind::topk:
            return k - 1.0;
        case CompressorKind::none:
        case CompressorKind::quant:
            return 2.0 * (k - 1.0) / k;
    }
    return 0.0;
}

struct Writer {
    std::vector<std::uint8_t> out;
    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        u64(bits);
    }
};

struct Reader {
    const std::vector<std::uint8_t>& in;
    std::size_t pos = 0;
    std::uint8_t u8() {
        if (pos + 1 > in.size()) throw ContractError("EncodedDelta: truncated payload");
        return in[pos++];
    }
    std::uint32_t u32() {
        if (pos + 4 > in.size()) throw ContractError("EncodedDelta: truncated payload");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        if (pos + 8 > in.size()) throw ContractError("EncodedDelta: truncated payload");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos++]) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
};

// 1-D Lloyd-Max: centroids initialized at uniform quantiles of the sorted
// group, nearest-centroid assignment with ties to the lower index, empty
// clusters keep their centroid.
std::vector<double> lloyd_max_levels(const double* begin, std::size_t n, std::size_t level_count) {
    std::vector<double> sorted(begin, begin + n);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> centroids(level_count);
    for (std::size_t l = 0; l < level_count; ++l) {
        std::size_t idx = static_cast<std::size_t>((static_cast<double>(l) + 0.5) *
                                                   static_cast<double>(n) / static_cast<double>(level_count));
        centroids[l] = sorted[std::min(idx, n - 1)];
    }
    std::vector<std::size_t> assign(n, 0);
    std::vector<double> sums(level_count);
    std::vector<std::size_t> counts(level_count);
    for (int it = 0; it < kLloydMaxIterations; ++it) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::abs(sorted[i] - centroids[0]);
            for (std::size_t l = 1; l < level_count; ++l) {
                const double d = std::abs(sorted[i] - centroids[l]);
                if (d < best_d) {
                    best_d = d;
                    best = l;
                }
            }
            assign[i] = best;
            sums[best] += sorted[i];
            counts[best] += 1;
        }
        bool changed = false;
        for (std::size_t l = 0; l < level_count; ++l) {
            if (counts[l] == 0) continue;
            const double next = sums[l] / static_cast<double>(counts[l]);
            if (next != centroids[l]) {
                centroids[l] = next;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return centroids;
}

std::uint16_t nearest_level(double x, const double* levels, std::size_t level_count) {
    std::size_t best = 0;
    double best_d = std::abs(x - levels[0]);
    for (std::size_t l = 1; l < level_count; ++l) {
        const double d = std::abs(x - levels[l]);
        if (d < best_d) {
            best_d = d;
            best = l;
        }
    }
    return static_cast<std::uint16_t>(best);
}

}  // namespace

void CompressorSpec::validate() const {
    switch (kind) {
        case CompressorKind::none:
            break;
        case CompressorKind::topk:
            if (!(k_pct > 0.0 && k_pct <= 100.0))
                throw ContractError("CompressorSpec: k_pct must be in (0, 100]");
            break;
        case CompressorKind::quant:
            if (bits != 2 && bits != 4 && bits != 8)
                throw ContractError("CompressorSpec: bits must be 2, 4, or 8");
            break;
    }
    if (ef_beta < 0.0 || ef_beta > 1.0)
        throw ContractError("CompressorSpec: ef_beta must be in [0, 1]");
}

bool is_lossless(const CompressorSpec& spec) {
    if (spec.kind == CompressorKind::none) return true;
    return spec.kind == CompressorKind::topk && spec.k_pct == 100.0;
}

EncodedDelta topk_encode(const Matrix& w, double k_pct) {
    if (!(k_pct > 0.0 && k_pct <= 100.0)) throw ContractError("topk_encode: k_pct out of range");
    const std::size_t n = w.size();
    const std::size_t kept = topk_keep_count(k_pct, n);

    std::vector<std::uint64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept - 1), order.end(),
                     [&](std::uint64_t x, std::uint64_t y) {
                         const double ax = std::abs(w[x]), ay = std::abs(w[y]);
                         if (ax != ay) return ax > ay;
                         return x < y;  // ties: lowest flat index wins
                     });
    order.resize(kept);
    std::sort(order.begin(), order.end());

    EncodedDelta e;
    e.kind = CompressorKind::topk;
    e.rows = static_cast<std::uint32_t>(w.rows());
    e.cols = static_cast<std::uint32_t>(w.cols());
    e.indices = std::move(order);
    e.values.reserve(kept);
    for (std::uint64_t i : e.indices) e.values.push_back(w[i]);
    e.logical_bytes = static_cast<double>(kept) * (4.0 + index_bits(n) / 8.0);
    return e;
}

Matrix topk_decode(const EncodedDelta& e) {
    if (e.kind != CompressorKind::topk) throw ContractError("topk_decode: wrong kind");
    Matrix out(e.rows, e.cols);
    for (std::size_t i = 0; i < e.indices.size(); ++i) out[e.indices[i]] = e.values[i];
    return out;
}

EncodedDelta quant_encode(const Matrix& w, const CompressorSpec& spec) {
    if (spec.kind != CompressorKind::quant) throw ContractError("quant_encode: spec is not quant");
    spec.validate();
    const std::size_t level_count = std::size_t{1} << spec.bits;
    const bool rowwise = spec.granularity == QuantGranularity::rowwise;
    const std::size_t groups = rowwise ? w.rows() : 1;
    const std::size_t group_len = rowwise ? w.cols() : w.size();

    EncodedDelta e;
    e.kind = CompressorKind::quant;
    e.bits = static_cast<std::uint8_t>(spec.bits);
    e.scheme = spec.scheme;
    e.granularity = spec.granularity;
    e.rows = static_cast<std::uint32_t>(w.rows());
    e.cols = static_cast<std::uint32_t>(w.cols());
    e.levels.resize(w.size());

    for (std::size_t g = 0; g < groups; ++g) {
        const double* data = w.data().data() + g * group_len;
        if (spec.scheme == QuantScheme::linear) {
            const auto [lo_it, hi_it] = std::minmax_element(data, data + group_len);
            const double lo = *lo_it, hi = *hi_it;
            e.codebook.push_back(lo);
            e.codebook.push_back(hi);
            const double range = hi - lo;
            for (std::size_t i = 0; i < group_len; ++i) {
                std::uint16_t idx = 0;
                if (range > 0.0) {
                    const double t = (data[i] - lo) / range * static_cast<double>(level_count - 1);
                    const long rounded = static_cast<long>(std::nearbyint(t));  // half-to-even
                    idx = static_cast<std::uint16_t>(
                        std::min<long>(static_cast<long>(level_count - 1), std::max<long>(0, rounded)));
                }
                e.levels[g * group_len + i] = idx;
            }
        } else {
            const std::vector<double> levels = lloyd_max_levels(data, group_len, level_count);
            e.codebook.insert(e.codebook.end(), levels.begin(), levels.end());
            for (std::size_t i = 0; i < group_len; ++i)
                e.levels[g * group_len + i] = nearest_level(data[i], levels.data(), level_count);
        }
    }
    e.logical_bytes = static_cast<double>(spec.bits) * static_cast<double>(w.size()) / 8.0 +
                      quant_metadata_bytes(spec.granularity, w.rows());
    return e;
}

Matrix quant_decode(const EncodedDelta& e) {
    if (e.kind != CompressorKind::quant) throw ContractError("quant_decode: wrong kind");
    const std::size_t level_count = std::size_t{1} << e.bits;
    const bool rowwise = e.granularity == QuantGranularity::rowwise;
    const std::size_t groups = rowwise ? e.rows : 1;
    const std::size_t group_len = rowwise ? e.cols : static_cast<std::size_t>(e.rows) * e.cols;

    Matrix out(e.rows, e.cols);
    for (std::size_t g = 0; g < groups; ++g) {
        if (e.scheme == QuantScheme::linear) {
            const double lo = e.codebook[2 * g];
            const double hi = e.codebook[2 * g + 1];
            const double range = hi - lo;
            for (std::size_t i = 0; i < group_len; ++i) {
                const std::uint16_t idx = e.levels[g * group_len + i];
                out[g * group_len + i] =
                    range > 0.0 ? lo + static_cast<double>(idx) * range / static_cast<double>(level_count - 1)
                                : lo;
            }
        } else {
            const double* levels = e.codebook.data() + g * level_count;
            for (std::size_t i = 0; i < group_len; ++i)
                out[g * group_len + i] = levels[e.levels[g * group_len + i]];
        }
    }
    return out;
}

EncodedDelta encode(const Matrix& w, const CompressorSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case CompressorKind::topk:
            return topk_encode(w, spec.k_pct);
        case CompressorKind::quant:
            return quant_encode(w, spec);
        case CompressorKind::none:
            break;
    }
    EncodedDelta e;
    e.kind = CompressorKind::none;
    e.rows = static_cast<std::uint32_t>(w.rows());
    e.cols = static_cast<std::uint32_t>(w.cols());
    e.values = w.data();
    e.logical_bytes = 4.0 * static_cast<double>(w.size());
    return e;
}

Matrix decode(const EncodedDelta& e) {
    switch (e.kind) {
        case CompressorKind::topk:
            return topk_decode(e);
        case CompressorKind::quant:
            return quant_decode(e);
        case CompressorKind::none:
            break;
    }
    return Matrix(e.rows, e.cols, e.values);
}

EncodedDelta ef_wrap(const Matrix& delta, Matrix& residual, const CompressorSpec& spec) {
    if (!delta.same_shape(residual)) throw ContractError("ef_wrap: residual shape mismatch");
    Matrix acc(delta.rows(), delta.cols());
    for (std::size_t i = 0; i < delta.size(); ++i) acc[i] = spec.ef_beta * residual[i] + delta[i];
    EncodedDelta emitted = encode(acc, spec);
    const Matrix decoded = decode(emitted);
    for (std::size_t i = 0; i < acc.size(); ++i) residual[i] = acc[i] - decoded[i];
    return emitted;
}

std::pair<Matrix, CommStats> collective_reduce(const std::vector<EncodedDelta>& encoded,
                                               const CompressorSpec& spec) {
    if (encoded.empty()) throw ContractError("collective_reduce: no payloads");
    const int workers = static_cast<int>(encoded.size());
    const std::uint32_t rows = encoded.front().rows;
    const std::uint32_t cols = encoded.front().cols;
    for (const auto& e : encoded)
        if (e.rows != rows || e.cols != cols)
            throw ContractError("collective_reduce: shape mismatch across workers");

    Matrix avg(rows, cols);
    for (const auto& e : encoded) {  // ascending worker index
        const Matrix d = decode(e);
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += d[i];
    }
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] /= static_cast<double>(workers);

    if (spec.kind == CompressorKind::quant) {
        // Second quantization stage before the all-gather.
        avg = quant_decode(quant_encode(avg, spec));
    }

    CommStats stats;
    stats.workers = workers;
    if (workers > 1) {
        stats.sent_bytes_per_worker = encoded.front().logical_bytes;
        stats.received_bytes_per_worker = collective_factor(spec, workers) * encoded.front().logical_bytes;
    }
    return {std::move(avg), stats};
}

WireBytes comm_bytes(const CompressorSpec& spec, std::size_t rows, std::size_t cols, int workers) {
    spec.validate();
    if (workers < 1) throw ContractError("comm_bytes: workers must be >= 1");
    const std::size_t elements = rows * cols;
    WireBytes wb;
    switch (spec.kind) {
        case CompressorKind::none:
            wb.sent = 4.0 * static_cast<double>(elements);
            break;
        case CompressorKind::quant:
            wb.sent = static_cast<double>(spec.bits) * static_cast<double>(elements) / 8.0 +
                      quant_metadata_bytes(spec.granularity, rows);
            break;
        case CompressorKind::topk:
            wb.sent = static_cast<double>(topk_keep_count(spec.k_pct, elements)) *
                      (4.0 + index_bits(elements) / 8.0);
            break;
    }
    wb.received = collective_factor(spec, workers) * wb.sent;
    return wb;
}

std::vector<std::uint8_t> EncodedDelta::serialize() const {
    Writer w;
    w.u8(static_cast<std::uint8_t>(kind));
    w.u8(bits);
    w.u8(static_cast<std::uint8_t>(scheme));
    w.u8(static_cast<std::uint8_t>(granularity));
    w.u32(rows);
    w.u32(cols);
    switch (kind) {
        case CompressorKind::none:
            for (double v : values) w.f64(v);
            break;
        case CompressorKind::topk:
            w.u64(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) {
                w.u64(indices[i]);
                w.f64(values[i]);
            }
            break;
        case CompressorKind::quant: {
            const std::size_t level_count = std::size_t{1} << bits;
            const std::size_t groups =
                granularity == QuantGranularity::rowwise ? rows : 1;
            const std::size_t cb_per_group = scheme == QuantScheme::linear ? 2 : level_count;
            w.u32(static_cast<std::uint32_t>(groups));
            for (std::size_t i = 0; i < groups * cb_per_group; ++i) w.f64(codebook[i]);
            for (std::uint16_t l : levels) {
                w.u8(static_cast<std::uint8_t>(l & 0xff));
                w.u8(static_cast<std::uint8_t>(l >> 8));
            }
            break;
        }
    }
    return w.out;
}

EncodedDelta EncodedDelta::deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    EncodedDelta e;
    e.kind = static_cast<CompressorKind>(r.u8());
    e.bits = r.u8();
    e.scheme = static_cast<QuantScheme>(r.u8());
    e.granularity = static_cast<QuantGranularity>(r.u8());
    e.rows = r.u32();
    e.cols = r.u32();
    const std::size_t elements = static_cast<std::size_t>(e.rows) * e.cols;
    switch (e.kind) {
        case CompressorKind::none:
            e.values.resize(elements);
            for (auto& v : e.values) v = r.f64();
            e.logical_bytes = 4.0 * static_cast<double>(elements);
            break;
        case CompressorKind::topk: {
            const std::uint64_t count = r.u64();
            e.indices.resize(count);
            e.values.resize(count);
            for (std::uint64_t i = 0; i < count; ++i) {
                e.indices[i] = r.u64();
                e.values[i] = r.f64();
            }
            e.logical_bytes = static_cast<double>(count) * (4.0 + index_bits(elements) / 8.0);
            break;
        }
        case CompressorKind::quant: {
            const std::size_t level_count = std::size_t{1} << e.bits;
            const std::size_t groups = r.u32();
            const std::size_t cb_per_group = e.scheme == QuantScheme::linear ? 2 : level_count;
            e.codebook.resize(groups * cb_per_group);
            for (auto& v : e.codebook) v = r.f64();
            e.levels.resize(elements);
            for (auto& l : e.levels) {
                const std::uint16_t lo = r.u8();
                const std::uint16_t hi = r.u8();
                l = static_cast<std::uint16_t>(lo | (hi << 8));
            }
            e.logical_bytes = static_cast<double>(e.bits) * static_cast<double>(elements) / 8.0 +
                              quant_metadata_bytes(e.granularity, e.rows);
            break;
        }
    }
    return e;
}

}  // namespace muloco
