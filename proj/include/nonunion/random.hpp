#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace nonunion {

/// SplitMix64 finalizer. Used to derive independent task seeds from a master seed.
std::uint64_t mix64(std::uint64_t x);

/// Seed for task `index` under `master`; independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Seeded generator with distribution helpers whose output depends only on the
/// engine bits, so results are identical across standard-library vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, bound); bound > 0.
    std::size_t index(std::size_t bound);
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    bool bernoulli(double p) { return uniform() < p; }
    /// Poisson variate (inversion; intended for small means).
    unsigned poisson(double mean);

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    /// `count` distinct indices from [0, n), sorted ascending.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);
    /// `count` indices from [0, n) drawn with replacement, in draw order.
    std::vector<std::size_t> sample_with_replacement(std::size_t n, std::size_t count);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace nonunion
