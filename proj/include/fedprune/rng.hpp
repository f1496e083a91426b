#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedprune {

/// Deterministic RNG used everywhere seeds matter. Distributions are
/// hand-rolled on top of the raw engine output so sequences do not depend
/// on the standard library's implementation-defined distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n) via rejection.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal (Box-Muller, second value cached).
    double normal();

    /// Partial Fisher-Yates: k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// splitmix64-style combine, for deriving per-(round, client, layer) streams.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedprune
