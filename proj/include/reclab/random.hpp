#pragma once

#include <cstdint>
#include <random>

namespace reclab {

/// SplitMix64 finalizer; used to turn (master seed, stream, index) into
/// statistically independent engine seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeds depend only on their arguments, never on scheduling, so any work
/// item can be recomputed independently of the worker count.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(master) ^ stream) + index);
}

// Stream tags keep the different consumers of one master seed apart.
namespace streams {
inline constexpr std::uint64_t invariant_blocks = 0x1001;
inline constexpr std::uint64_t measure = 0x1002;
inline constexpr std::uint64_t starts = 0x1003;
inline constexpr std::uint64_t trajectories = 0x1004;
inline constexpr std::uint64_t flow_blocks = 0x1005;
inline constexpr std::uint64_t mean_roof = 0x1006;
inline constexpr std::uint64_t profile = 0x1007;
inline constexpr std::uint64_t configs = 0x1008;
}  // namespace streams

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits; portable across standard libraries.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bit() {
        if (bits_left_ == 0) {
            bit_buffer_ = engine_();
            bits_left_ = 64;
        }
        const bool b = bit_buffer_ & 1U;
        bit_buffer_ >>= 1;
        --bits_left_;
        return b;
    }

  private:
    std::mt19937_64 engine_;
    std::uint64_t bit_buffer_ = 0;
    int bits_left_ = 0;
};

}  // namespace reclab
