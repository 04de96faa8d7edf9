#pragma once

#include "lcinf/core.hpp"

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace lcinf {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Hashes a root seed and a key path (e.g. theta index, replication,
/// equation) into a stream identifier.
inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(seed ^ 0x6A09E667F3BCC909ULL);
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x3C6EF372FE94F82BULL));
    return h;
}

/// Counter-based stream: the i-th output is a pure function of (key, i), so
/// results never depend on thread scheduling.
class Stream {
public:
    explicit Stream(std::uint64_t key) : key_(key) {}
    Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) : key_(derive_key(seed, path)) {}

    std::uint64_t next_u64() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

    /// Uniform on (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    Vector normals(Index n) {
        Vector z(n);
        for (Index i = 0; i < n; ++i) z(i) = normal();
        return z;
    }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next_u64() % bound; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace lcinf
