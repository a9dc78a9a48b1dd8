#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace nestco {

/// Counter-based random stream.
///
/// A stream is a 64-bit key plus a counter; draw i is a keyed hash of i, so
/// streams can be split into independent children by id without touching the
/// parent state. Masks for (seed, epoch, batch, model) come from
/// `Rng(seed).split({model, epoch, batch})` and are reproducible regardless of
/// thread scheduling.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept;

    /// Child stream keyed by `id`; the parent counter is unaffected.
    Rng split(std::uint64_t id) const noexcept;
    Rng split(std::initializer_list<std::uint64_t> path) const noexcept;

    result_type operator()() noexcept;
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p) noexcept { return uniform() < p; }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    Rng(std::uint64_t key, std::uint64_t counter) noexcept : key_(key), counter_(counter) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace nestco
