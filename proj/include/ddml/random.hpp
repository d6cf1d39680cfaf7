#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace ddml {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Folds a list of integers into one seed. Used to derive independent
/// streams for (seed, rep, fold, cef, learner) style task keys.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// Portable random stream.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by
/// the standard. The derived draws below are implemented here rather than
/// through <random> distributions, whose algorithms vary between standard
/// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via the Marsaglia polar method.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::span<T> values, Rng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace ddml
