#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace agritag {

/// Seeded generator with a portable double/int mapping (std distributions are
/// implementation-defined, so they are avoided to keep run logs identical across toolchains).
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n) without modulo bias.
    uint64_t below(uint64_t n)
    {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
};

inline uint64_t splitmix64(uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s)
{
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent named substreams derived from one run seed. Adding a stream never
/// perturbs the draws of another.
class RngStreams {
public:
    explicit RngStreams(uint64_t seed) : seed_(seed) {}

    Rng stream(std::string_view name) const { return Rng(splitmix64(seed_ ^ splitmix64(fnv1a64(name)))); }

    uint64_t seed() const noexcept { return seed_; }

private:
    uint64_t seed_;
};

} // namespace agritag
