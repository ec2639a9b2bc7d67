#pragma once

// Portable pseudo-random streams. The engine is std::mt19937_64, whose output
// sequence is fully specified by the C++ standard (10000th draw of a
// default-seeded engine is 9981545732273789042). Distributions are derived here
// rather than through <random> distributions, whose algorithms are
// implementation-defined:
//   uniform()  = (x >> 11) * 2^-53                       in [0, 1)
//   normal()   = Phi^{-1}(((x >> 11) + 0.5) * 2^-53)      via inverse CDF
//   index(n)   = floor(uniform() * n)

#include <cstddef>
#include <cstdint>
#include <random>

#include <boost/math/distributions/normal.hpp>

namespace qens {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double open_uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        return boost::math::quantile(boost::math::normal_distribution<double>(), open_uniform());
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::size_t index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    /// Independent child stream derived from this seed and a tag.
    static Rng derive(std::uint64_t seed, std::uint64_t tag) {
        // splitmix64 finalizer
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace qens
