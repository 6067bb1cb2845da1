#pragma once

// Counter-based random streams. A stream is fully determined by its key
// (seed, stream id, three subkeys) and the draw counter, so results do not
// depend on thread scheduling or call interleaving across workers.

#include <cmath>
#include <cstdint>

namespace muloco::rng {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream ids used across the project. Values are part of the reproducibility
// contract: changing them changes every generated batch.
enum class StreamId : std::uint64_t {
    data = 1,     // training examples, keyed (round, step, example)
    init = 2,     // parameter initialization
    task = 3,     // task identity (teacher weights, curvature, optimum)
    eval = 4,     // held-out evaluation batch
    fit = 5,      // scaling-fit restart initializations
    audit = 6,    // randomized audit configurations
};

struct Key {
    std::uint64_t seed = 0;
    StreamId stream = StreamId::data;
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t c = 0;
};

class Stream {
  public:
    explicit Stream(const Key& k) {
        std::uint64_t h = mix64(k.seed ^ 0x8f1bbcdcbfa53e0bULL);
        h = mix64(h ^ static_cast<std::uint64_t>(k.stream) * 0xd6e8feb86659fd93ULL);
        h = mix64(h ^ k.a * 0xa3b195354a39b70dULL);
        h = mix64(h ^ k.b * 0x1b03738712fad5c9ULL);
        h = mix64(h ^ k.c * 0xe7037ed1a0b428dbULL);
        base_ = h;
    }

    std::uint64_t next_u64() { return mix64(base_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    // Uniform in [0, 1).
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double next_uniform_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes two draws, returns one.
    double next_gaussian() {
        const double u1 = next_uniform_open();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    std::uint64_t base_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace muloco::rng
