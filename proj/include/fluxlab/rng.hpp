#pragma once

#include <cmath>
#include <cstdint>

#include "fluxlab/constants.hpp"

namespace fluxlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based stream: one u64 per (seed, a, b) triple. Streams derived this
/// way are independent of evaluation order, so grid points and measurement
/// shots can run on any number of threads and still reproduce bit-exactly.
inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(seed ^ 0x8f2d3a6b1c95e47fULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

inline double u01_from_bits(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53; // [0, 1)
}

inline double counter_u01(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return u01_from_bits(counter_hash(seed, a, b));
}

/// Sequential generator for fits and synthetic-data helpers. Hand-rolled
/// Box-Muller keeps byte-level determinism across standard libraries.
class SeqRng {
public:
    /// The seed is scrambled once so that nearby seeds start far apart in the
    /// underlying counter sequence.
    explicit SeqRng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

    std::uint64_t next_u64() { return splitmix64(state_++); }

    double next_u01() { return u01_from_bits(next_u64()); }

    /// Uniform over (0, 1], safe as a log argument.
    double next_u01_open() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_u01_open();
        const double u2 = next_u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    /// Index in [0, n) from cumulative weights summing to ~1.
    template <class Container>
    std::size_t next_categorical(const Container& cumulative) {
        const double u = next_u01();
        std::size_t i = 0;
        while (i + 1 < cumulative.size() && u >= cumulative[i]) ++i;
        return i;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace fluxlab
