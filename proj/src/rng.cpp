#include "gaf/rng.hpp"

#include <cmath>
#include <numbers>

namespace gaf {

namespace {

constexpr std::uint32_t philox_m0 = 0xD2511F53u;
constexpr std::uint32_t philox_m1 = 0xCD9E8D57u;
constexpr std::uint32_t philox_w0 = 0x9E3779B9u;
constexpr std::uint32_t philox_w1 = 0xBB67AE85u;

double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{philox_m0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{philox_m1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += philox_w0;
        key[1] += philox_w1;
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
    return splitmix64(seed ^ splitmix64(purpose + 0x5851F42D4C957F2Dull));
}

std::array<std::uint32_t, 4> CounterRng::block(Stream stream, std::uint64_t a, std::uint32_t b, std::uint32_t c) const {
    const std::uint64_t k = derive_seed(seed_, static_cast<std::uint64_t>(stream));
    return philox4x32_10({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, c},
                         {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)});
}

double CounterRng::uniform(Stream stream, std::uint64_t a, std::uint32_t b, std::uint32_t c) const {
    const auto w = block(stream, a, b, c);
    return to_unit(w[0], w[1]);
}

double CounterRng::normal(Stream stream, std::uint64_t a, std::uint32_t b, std::uint32_t c) const {
    const auto w = block(stream, a, b, c);
    const double u1 = to_unit(w[0], w[1]);
    const double u2 = to_unit(w[2], w[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n, Stream stream, std::uint64_t a, std::uint32_t b, std::uint32_t c) const {
    const auto w = block(stream, a, b, c);
    const std::uint64_t bits = (std::uint64_t{w[0]} << 32) | w[1];
    // 128-bit multiply-shift; bias is below 2^-64 * n.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits) * n) >> 64);
}

}  // namespace gaf
