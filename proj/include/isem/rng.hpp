#pragma once

// Portable random streams.
//
// Every stream is a std::mt19937_64 whose output sequence is fixed by the
// standard. The conversions to doubles, integers and distributions live here
// instead of <random>'s distributions, which are implementation-defined, so a
// seed reproduces the same draws on every platform.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace isem {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a stream seed from an ordered key, e.g. (master_seed, thread, iteration).
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> key) noexcept {
    std::uint64_t h = 0x2545f4914f6cdd1dULL;
    for (std::uint64_t k : key) h = mix64(h ^ mix64(k));
    return h;
}

inline Rng make_stream(std::initializer_list<std::uint64_t> key) { return Rng(derive_seed(key)); }

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer on [0, n). n must be positive.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Unit-rate exponential draw, strictly positive.
inline double exponential(Rng& rng) {
    const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; // open interval (0, 1)
    return -std::log(u);
}

/// Samples an index proportionally to non-negative weights. The weights need
/// not be normalized; the last positive entry absorbs rounding.
inline std::size_t sample_categorical(Rng& rng, std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        last_positive = i;
        acc += weights[i];
        if (u < acc) return i;
    }
    return last_positive;
}

/// Fills `out` with a draw from the flat Dirichlet(1, ..., 1) by normalizing
/// independent unit exponentials.
inline void sample_flat_dirichlet(Rng& rng, std::span<double> out) {
    double total = 0.0;
    for (double& x : out) {
        x = exponential(rng);
        total += x;
    }
    for (double& x : out) x /= total;
}

/// In-place Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace isem
