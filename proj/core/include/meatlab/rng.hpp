#pragma once

#include "meatlab/tensor.hpp"

#include <cstdint>

namespace meat {

/// Counter-based generator: draw i is a pure hash of (seed, i), so any
/// substream can be reproduced without replaying the ones before it.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Standard normal via Box-Muller; consumes two draws.
    double normal() noexcept;
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept;

    /// Independent generator keyed by (seed, id); does not advance this one.
    Rng substream(std::uint64_t id) const noexcept;

    bool operator==(const Rng&) const = default;

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

Tensor gaussian(Rng& rng, const Shape& shape);
Tensor uniform(Rng& rng, const Shape& shape, float lo, float hi);

} // namespace meat
