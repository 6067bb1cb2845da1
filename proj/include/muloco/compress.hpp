#pragma once

// Pseudogradient codecs (top-k, linear / statistical quantization at global
// or row granularity), error feedback, the simulated two-quantization
// collective, and closed-form wire-size accounting.
//
// Value transport is exact (f64 payload entries) so that lossless settings
// reproduce trajectories bitwise. Wire sizes are modeled separately in
// `logical_bytes` using the fp32 accounting convention: 4 bytes per value or
// metadata real, bits*count/8 for level indices, ceil(log2(rows*cols)) bits
// per top-k index. The byte-exact dump serialization (see serialize()) is a
// container format and is larger than `logical_bytes` by design.
//
// Serialization layout, little-endian:
//   header: kind u8, bits u8, scheme u8, granularity u8, rows u32, cols u32
//   none:   rows*cols f64
//   topk:   count u64, then count * (index u64, value f64)
//   quant:  group_count u32, then per group the codebook (linear: lo f64,
//           hi f64; statistical: 2^bits f64 levels), then rows*cols u16
//           level indices.

#include <cstdint>
#include <utility>
#include <vector>

#include "muloco/linalg.hpp"

namespace muloco {

enum class CompressorKind : std::uint8_t { none = 0, topk = 1, quant = 2 };
enum class QuantScheme : std::uint8_t { linear = 0, statistical = 1 };
enum class QuantGranularity : std::uint8_t { global = 0, rowwise = 1 };

struct CompressorSpec {
    CompressorKind kind = CompressorKind::none;
    double k_pct = 100.0;  // topk: percent of entries kept, (0, 100]
    int bits = 8;          // quant: 2, 4, or 8
    QuantScheme scheme = QuantScheme::linear;
    QuantGranularity granularity = QuantGranularity::global;
    bool error_feedback = false;
    double ef_beta = 1.0;

    void validate() const;
};

// True when encode/decode reproduces any input bitwise (none, or topk at 100%).
bool is_lossless(const CompressorSpec& spec);

struct EncodedDelta {
    CompressorKind kind = CompressorKind::none;
    std::uint8_t bits = 0;
    QuantScheme scheme = QuantScheme::linear;
    QuantGranularity granularity = QuantGranularity::global;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;

    std::vector<double> values;         // none: dense; topk: kept values
    std::vector<std::uint64_t> indices; // topk: flat indices of kept values
    std::vector<double> codebook;       // quant: per-group levels, concatenated
    std::vector<std::uint16_t> levels;  // quant: per-entry level index
    double logical_bytes = 0.0;         // modeled wire size (see accounting above)

    std::vector<std::uint8_t> serialize() const;
    static EncodedDelta deserialize(const std::vector<std::uint8_t>& bytes);
};

// Per-worker residual accumulators, one matrix per parameter, zero-initialized.
struct EfState {
    std::vector<Matrix> residual;
};

struct CommStats {
    double sent_bytes_per_worker = 0.0;      // one encoded payload
    double received_bytes_per_worker = 0.0;  // under the modeled collective
    int workers = 0;

    CommStats& operator+=(const CommStats& o) {
        sent_bytes_per_worker += o.sent_bytes_per_worker;
        received_bytes_per_worker += o.received_bytes_per_worker;
        workers = o.workers;
        return *this;
    }
};

// Keeps the k% largest-magnitude entries (at least one); ties keep the lowest
// flat index. Kept values are transported bit-exactly.
EncodedDelta topk_encode(const Matrix& w, double k_pct);
Matrix topk_decode(const EncodedDelta& e);

// Linear: 2^bits levels uniformly spaced over [min, max] of the tensor
// (global) or of each row (rowwise); level index chosen round-half-to-even.
// Statistical: levels are the 2^bits centroids of a 1-D Lloyd-Max run
// initialized at uniform quantiles, at most 50 iterations, deterministic.
// A constant group degenerates to a single exact level.
EncodedDelta quant_encode(const Matrix& w, const CompressorSpec& spec);
Matrix quant_decode(const EncodedDelta& e);

// Dispatch on spec.kind.
EncodedDelta encode(const Matrix& w, const CompressorSpec& spec);
Matrix decode(const EncodedDelta& e);

// Error feedback around a codec: acc = beta * residual + delta; emit
// encode(acc); residual = acc - decode(emitted).
EncodedDelta ef_wrap(const Matrix& delta, Matrix& residual, const CompressorSpec& spec);

// Simulated collective. Quantized payloads pass exactly two quantize /
// dequantize stages (all-to-all reduce-scatter, full-precision average,
// re-quantize, all-gather); top-k and none decode and average in one stage.
// Reduction order is ascending worker index.
std::pair<Matrix, CommStats> collective_reduce(const std::vector<EncodedDelta>& encoded,
                                               const CompressorSpec& spec);

struct WireBytes {
    double sent = 0.0;      // per worker, payload
    double received = 0.0;  // per worker, collective volume factor applied
};

// Closed-form per-worker wire sizes for a rows x cols tensor across K workers.
// none: 4*m*n per direction (ring all-reduce factor applied by the cost
// model); quant: bits*m*n/8 + 8 bytes of metadata per group, received scaled
// by 2(K-1)/K; topk: (4 + ceil(log2(m*n))/8) bytes per kept entry, received
// scaled by (K-1) under the all-gather.
WireBytes comm_bytes(const CompressorSpec& spec, std::size_t rows, std::size_t cols, int workers);

}  // namespace muloco
