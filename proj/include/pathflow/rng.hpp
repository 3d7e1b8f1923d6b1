#pragma once

#include <cstdint>

namespace pathflow {

/// Counter-based random stream (Philox 4x32-10). Output is a pure function of
/// (seed, stream, counter), so path k of a Monte Carlo run always sees the
/// same numbers no matter how paths are scheduled across threads.
///
/// Stream layout: key = seed split into two 32-bit words; the 64-bit stream id
/// occupies the upper half of the 128-bit counter, the draw index the lower.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    /// Uniform double in (0, 1).
    double uniform();

    /// Standard normal via Box-Muller; generated in pairs, second value cached.
    double normal();

    /// Skips the cached Box-Muller value (used when switching draw kinds).
    void flush_cache() { has_cached_ = false; }

private:
    void philox_block(std::uint32_t out[4]);

    std::uint32_t key0_, key1_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t counter_ = 0;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

} // namespace pathflow
