#pragma once

#include <cstdint>
#include <string_view>

namespace dtnprobe {

/// Deterministic 64-bit PRNG (splitmix64). Used for every randomized
/// experiment so runs are reproducible across platforms; the algorithm
/// identifier "splitmix64" is echoed in run reports.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [a,b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Uniform in [-1,1).
    double symmetric() { return uniform(-1.0, 1.0); }

    static constexpr std::string_view algorithm() { return "splitmix64"; }

private:
    std::uint64_t state_;
};

/// FNV-1a over a string, for deriving named substreams from one seed.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline SplitMix64 substream(std::uint64_t seed, std::string_view name) {
    return SplitMix64(seed ^ fnv1a(name));
}

} // namespace dtnprobe
