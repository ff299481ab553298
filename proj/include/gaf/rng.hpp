#pragma once

#include <array>
#include <cstdint>

namespace gaf {

/// Stream tags; each consumer of randomness draws from its own stream so that
/// adding a new consumer never shifts the values seen by existing ones.
enum class Stream : std::uint32_t {
    init = 1,
    batch_index = 2,
    bridge_noise = 3,
    bridge_time = 4,
    dataset = 5,
    latent = 6,
    metric = 7,
    projection = 8,
    split = 9,
};

/// Counter-based generator (Philox4x32-10).
///
/// A draw is a pure function of (seed, stream, a, b, c): there is no hidden
/// state to persist, so resuming at iteration k reproduces the same numbers an
/// uninterrupted run sees at k.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::array<std::uint32_t, 4> block(Stream stream, std::uint64_t a, std::uint32_t b = 0, std::uint32_t c = 0) const;

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform(Stream stream, std::uint64_t a, std::uint32_t b = 0, std::uint32_t c = 0) const;

    /// Standard normal via Box-Muller on a single block.
    double normal(Stream stream, std::uint64_t a, std::uint32_t b = 0, std::uint32_t c = 0) const;

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n, Stream stream, std::uint64_t a, std::uint32_t b = 0, std::uint32_t c = 0) const;

private:
    std::uint64_t seed_;
};

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Independent child seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose);

}  // namespace gaf
