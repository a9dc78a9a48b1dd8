#include "nestco/rng.hpp"

#include <random>

namespace nestco {

namespace {

constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed) noexcept : key_(mix(seed + golden)) {}

Rng Rng::split(std::uint64_t id) const noexcept
{
    return Rng(mix(key_ ^ mix(id * golden + 0x632BE59BD9B4E019ULL)), 0);
}

Rng Rng::split(std::initializer_list<std::uint64_t> path) const noexcept
{
    Rng r = *this;
    for (auto id : path)
        r = r.split(id);
    return r;
}

Rng::result_type Rng::operator()() noexcept
{
    return mix(key_ + golden * ++counter_);
}

double Rng::uniform() noexcept
{
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev)
{
    std::normal_distribution<double> dist(mean, stddev);
    return dist(*this);
}

std::size_t Rng::below(std::size_t n)
{
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(*this);
}

} // namespace nestco
