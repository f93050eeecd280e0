#include "meatlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace meat {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed) noexcept : seed_(seed), key_(mix64(seed + kGamma)) {}

std::uint64_t Rng::next_u64() noexcept {
    // splitmix64 evaluated at an explicit counter position
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() noexcept {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
    if (bound == 0) return 0;
    const auto pick = static_cast<std::uint64_t>(uniform() * static_cast<double>(bound));
    return pick < bound ? pick : bound - 1;
}

Rng Rng::substream(std::uint64_t id) const noexcept {
    return Rng(mix64(key_ ^ mix64(id + 0x632BE59BD9B4E019ULL)));
}

Tensor gaussian(Rng& rng, const Shape& shape) {
    Tensor out(shape);
    for (float& v : out.values()) v = static_cast<float>(rng.normal());
    return out;
}

Tensor uniform(Rng& rng, const Shape& shape, float lo, float hi) {
    Tensor out(shape);
    const double width = static_cast<double>(hi) - lo;
    for (float& v : out.values()) v = static_cast<float>(lo + width * rng.uniform());
    return out;
}

} // namespace meat
