#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

#include "icl/hashing.hpp"

namespace icl {

/// Seeded generator with portable bounded sampling. std::mt19937_64 is
/// fully specified by the standard; the distributions in <random> are not,
/// so index draws go through `uniform` below.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t uniform(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform real in [0, 1).
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform(i)]);
    }

  private:
    std::mt19937_64 engine_;
};

/// Independent stream per (seed, query, arm, shots); adding arms never
/// perturbs other arms.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t query_id, std::string_view arm, int shots) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ query_id);
    h = splitmix64(h ^ fnv1a64(arm));
    return splitmix64(h ^ static_cast<std::uint64_t>(shots));
}

} // namespace icl
