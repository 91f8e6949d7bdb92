#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace cortrieve {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a stream tag.
/// All randomness in a run flows from one master seed through this function,
/// so components can be re-seeded independently yet reproducibly.
inline uint64_t derive_seed(uint64_t master, std::string_view stream) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char c : stream) {
        h ^= c;
        h *= 1099511628211ull;
    }
    uint64_t s = master ^ h;
    splitmix64(s);
    return splitmix64(s);
}

/// Deterministic RNG. The engine (mt19937_64) and every distribution mapping
/// here are fully specified, so identical seeds give identical streams on any
/// platform; std::uniform_*_distribution is deliberately not used.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [low, high).
    double uniform(double low, double high) {
        double v = low + uniform01() * (high - low);
        if (v >= high) v = std::nextafter(high, low);  // guard the rounding edge
        return v;
    }

    /// Uniform integer in [0, n). Unbiased via rejection.
    uint64_t index(uint64_t n) {
        const uint64_t max = std::numeric_limits<uint64_t>::max();
        const uint64_t limit = max - max % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cortrieve
