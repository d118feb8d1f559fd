#pragma once

#include <apd/core.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace apd {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

/**
 * Counter-based generator: the k-th draw of stream (seed, stream) is a pure
 * function of (seed, stream, k), so trials can run in any order or thread.
 */
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0) : key_(splitmix64(seed) ^ splitmix64(~stream)) {}

    std::uint64_t next() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11U) * 0x1.0p-53; }

    /// Uniform in {0,..,n-1} without modulo bias.
    std::size_t below(std::size_t n) {
        if (n == 0) {
            throw ContractError("Rng::below: empty range");
        }
        const auto bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = next();
        while (x >= limit) {
            x = next();
        }
        return static_cast<std::size_t>(x % bound);
    }

    double exponential() { return -std::log1p(-uniform()); }

    /// Index drawn proportionally to nonnegative weights.
    std::size_t pick(const std::vector<double>& weights) {
        double total = 0.0;
        for (auto w : weights) {
            total += w;
        }
        if (!(total > 0.0)) {
            throw ContractError("Rng::pick: weights sum to zero");
        }
        const double u = uniform() * total;
        double acc = 0.0;
        std::size_t last = 0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (weights[k] <= 0.0) {
                continue;
            }
            acc += weights[k];
            last = k;
            if (u < acc) {
                return k;
            }
        }
        return last;
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t k = items.size(); k > 1; --k) {
            std::swap(items[k - 1], items[below(k)]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace apd
