#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace fpnet {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256** 1.0 (Blackman & Vigna), seeded through splitmix64. The whole
// generator is defined here so a seed reproduces the same stream on any
// platform, independent of the standard library's <random> distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& s : state_) s = detail::splitmix64(sm);
    }

    explicit Rng(const std::array<std::uint64_t, 4>& state) : state_(state) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Box-Muller; draws exactly two uniforms per pair, second value cached.
    double normal(double mean, double stddev) {
        if (has_cached_) {
            has_cached_ = false;
            return mean + stddev * cached_;
        }
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Uniform integer in [0, n); fixed-point multiply keeps it branch-free.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    const std::array<std::uint64_t, 4>& state() const { return state_; }

private:
    std::array<std::uint64_t, 4> state_{};
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Derives an independent stream seed from (seed, tag, a, b). Used so that
// shuffling, augmentation, and init never share a stream and every consumer is
// a pure function of its coordinates (epoch, batch index, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    (void)detail::splitmix64(s);
    s ^= 0xA0761D6478BD642FULL * (tag + 1);
    (void)detail::splitmix64(s);
    s ^= 0xE7037ED1A0B428DBULL * (a + 1);
    (void)detail::splitmix64(s);
    s ^= 0x8EBC6AF09C88C6E3ULL * (b + 1);
    return detail::splitmix64(s);
}

namespace rng_stream {
constexpr std::uint64_t kParamInit = 1;
constexpr std::uint64_t kShuffle = 2;
constexpr std::uint64_t kAugment = 3;
constexpr std::uint64_t kVerify = 4;
}  // namespace rng_stream

}  // namespace fpnet
