#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace targetloc {

// Counter-based pseudorandom generator used everywhere randomness is needed
// (view sampling, weight init, RANSAC, scene synthesis). The exact scheme is
// spelled out below so that independent implementations produce identical
// streams.
//
//   output(i) = mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
//
// where mix64 is the SplitMix64 finalizer:
//
//   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//   z ^= z >> 27;  z *= 0x94D049BB133111EB;
//   z ^= z >> 31;
//
// Sub-streams are derived, never split by sharing state:
//
//   derive(key, tag) = mix64(key ^ (tag * 0xD1342543DE82EF95 + 0x2545F4914F6CDD1D))
//
// String tags go through FNV-1a 64 first. Every sample of a dataset owns the
// stream derive(derive(global_seed, fnv1a64(split)), index), which is what
// makes generation order-independent and reproducible per (seed, split, index).

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t tag) {
    return mix64(key ^ (tag * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull));
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

constexpr std::uint64_t derive_key(std::uint64_t key, std::string_view tag) {
    return derive_key(key, fnv1a64(tag));
}

class CounterRng {
public:
    CounterRng() = default;
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGoldenGamma); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    /// Uniform integer in [0, n). n = 0 is a caller bug; returns 0.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller. Always consumes exactly two draws.
    double normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        // keep u1 away from 0 so log() stays finite
        u1 = 0.5 * 0x1.0p-53 + u1 * (1.0 - 0x1.0p-53);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    CounterRng fork(std::uint64_t tag) const { return CounterRng(derive_key(key_, tag)); }
    CounterRng fork(std::string_view tag) const { return CounterRng(derive_key(key_, tag)); }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace targetloc
