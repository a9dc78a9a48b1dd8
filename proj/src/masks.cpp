#include "nestco/masks.hpp"

#include "nestco/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nestco::masks {

Mask Mask::ones(std::size_t channels)
{
    return Mask(std::vector<std::uint8_t>(channels, 1));
}

Mask Mask::prefix(std::size_t channels, std::size_t k)
{
    std::vector<std::uint8_t> bits(channels, 0);
    std::fill_n(bits.begin(), std::min(k, channels), std::uint8_t{1});
    return Mask(std::move(bits));
}

std::size_t Mask::popcount() const noexcept
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t Mask::prefix_length() const noexcept
{
    auto it = std::find(bits.begin(), bits.end(), std::uint8_t{0});
    return static_cast<std::size_t>(it - bits.begin());
}

bool Mask::is_prefix() const noexcept
{
    const std::size_t k = prefix_length();
    return std::all_of(bits.begin() + static_cast<std::ptrdiff_t>(k), bits.end(),
                       [](std::uint8_t b) { return b == 0; });
}

void DropoutSpec::validate() const
{
    if (!(p_drop >= 0.0 && p_drop < 1.0))
        throw DomainError("p_drop must lie in [0, 1), got " + std::to_string(p_drop));
}

void NestedSpec::validate() const
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw DomainError("sigma_nest must be positive and finite");
    if (channels < 1)
        throw DomainError("nested dropout needs at least one channel");
}

std::size_t channel_count(const MaskDistribution& dist)
{
    return std::visit([](const auto& d) { return d.channels; }, dist);
}

bool is_nested(const MaskDistribution& dist)
{
    return std::holds_alternative<NestedSpec>(dist);
}

std::vector<double> categorical_probs(const NestedSpec& spec)
{
    spec.validate();
    const std::size_t K = spec.channels;
    const double denom = 2.0 * spec.sigma * spec.sigma;
    std::vector<double> logw(K);
    for (std::size_t k = 1; k <= K; ++k) {
        const double kk = static_cast<double>(k);
        logw[k - 1] = -(kk * kk) / denom;
    }
    // log-sum-exp; logw is decreasing so the first entry is the max.
    const double top = logw.front();
    double total = 0.0;
    for (double lw : logw)
        total += std::exp(lw - top);
    const double log_norm = top + std::log(total);
    std::vector<double> p(K);
    for (std::size_t i = 0; i < K; ++i)
        p[i] = std::exp(logw[i] - log_norm);
    return p;
}

Mask sample_dropout_mask(const DropoutSpec& spec, Rng& rng)
{
    spec.validate();
    std::vector<std::uint8_t> bits(spec.channels);
    for (auto& b : bits)
        b = rng.uniform() >= spec.p_drop ? 1 : 0;
    return Mask(std::move(bits));
}

namespace {

// Inverse-CDF draw of an index in [0, p.size()).
std::size_t draw_index(std::span<const double> p, Rng& rng)
{
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc)
            return i;
    }
    // Rounding left the total slightly below one; fall back to the last
    // index with positive mass.
    for (std::size_t i = p.size(); i-- > 0;)
        if (p[i] > 0.0)
            return i;
    return 0;
}

} // namespace

Mask sample_nested_mask(const NestedSpec& spec, Rng& rng)
{
    const auto p = categorical_probs(spec);
    const std::size_t k = draw_index(p, rng) + 1;
    return Mask::prefix(spec.channels, k);
}

Mask sample_nested_mask_chain(const ChainParams& chain, Rng& rng)
{
    const std::size_t K = chain.eta.size() + 1;
    std::size_t k = 1;
    while (k < K && rng.uniform() < chain.eta[k - 1])
        ++k;
    return Mask::prefix(K, k);
}

Mask sample_mask(const MaskDistribution& dist, Rng& rng)
{
    struct Visitor {
        Rng& rng;
        Mask operator()(const NoMask& d) const { return Mask::ones(d.channels); }
        Mask operator()(const DropoutSpec& d) const { return sample_dropout_mask(d, rng); }
        Mask operator()(const NestedSpec& d) const { return sample_nested_mask(d, rng); }
    };
    return std::visit(Visitor{rng}, dist);
}

ChainParams chain_params_from_categorical(std::span<const double> p)
{
    if (p.empty())
        throw DomainError("categorical vector must be non-empty");
    for (double v : p)
        if (!(v >= 0.0))
            throw DomainError("categorical probabilities must be non-negative");

    const std::size_t K = p.size();
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9)
        throw DomainError("categorical probabilities must sum to one");

    // 1 - P_k is evaluated as the tail sum of p past k, which equals it
    // exactly in real arithmetic and keeps small tails accurate.
    std::vector<double> tail(K + 1, 0.0);
    for (std::size_t i = K; i-- > 0;)
        tail[i] = tail[i + 1] + p[i];

    ChainParams chain;
    chain.eta.assign(K - 1, 0.0);
    for (std::size_t k = 1; k < K; ++k) {
        const double remaining_before = tail[k - 1];
        const double remaining_after = tail[k];
        if (remaining_before <= 0.0 || remaining_after <= 0.0)
            break; // the chain never gets past channel k
        chain.eta[k - 1] = std::clamp(remaining_after / remaining_before, 0.0, 1.0);
    }
    return chain;
}

std::vector<double> categorical_from_chain(const ChainParams& chain)
{
    for (double e : chain.eta)
        if (!(e >= 0.0 && e <= 1.0))
            throw DomainError("chain probabilities must lie in [0, 1]");
    const std::size_t K = chain.eta.size() + 1;
    std::vector<double> p(K);
    double survive = 1.0;
    for (std::size_t k = 1; k < K; ++k) {
        p[k - 1] = survive * (1.0 - chain.eta[k - 1]);
        survive *= chain.eta[k - 1];
    }
    p[K - 1] = survive;
    return p;
}

std::vector<double> expected_mask(const MaskDistribution& dist)
{
    struct Visitor {
        std::vector<double> operator()(const NoMask& d) const { return std::vector<double>(d.channels, 1.0); }
        std::vector<double> operator()(const DropoutSpec& d) const
        {
            d.validate();
            return std::vector<double>(d.channels, 1.0 - d.p_drop);
        }
        std::vector<double> operator()(const NestedSpec& d) const
        {
            const auto p = categorical_probs(d);
            std::vector<double> keep(d.channels);
            double tail = 0.0;
            for (std::size_t i = d.channels; i-- > 0;) {
                tail += p[i];
                keep[i] = tail;
            }
            return keep;
        }
    };
    return std::visit(Visitor{}, dist);
}

std::vector<WeightedMask> enumerate_support(const MaskDistribution& dist)
{
    struct Visitor {
        std::vector<WeightedMask> operator()(const NoMask& d) const { return {{Mask::ones(d.channels), 1.0}}; }
        std::vector<WeightedMask> operator()(const DropoutSpec& d) const
        {
            d.validate();
            if (d.channels > 20)
                throw UsageError("dropout support enumeration limited to 20 channels");
            std::vector<WeightedMask> out;
            const std::size_t count = std::size_t{1} << d.channels;
            out.reserve(count);
            for (std::size_t code = 0; code < count; ++code) {
                std::vector<std::uint8_t> bits(d.channels);
                double prob = 1.0;
                for (std::size_t c = 0; c < d.channels; ++c) {
                    bits[c] = (code >> c) & 1U;
                    prob *= bits[c] ? 1.0 - d.p_drop : d.p_drop;
                }
                if (prob > 0.0)
                    out.push_back({Mask(std::move(bits)), prob});
            }
            return out;
        }
        std::vector<WeightedMask> operator()(const NestedSpec& d) const
        {
            const auto p = categorical_probs(d);
            std::vector<WeightedMask> out;
            for (std::size_t k = 1; k <= d.channels; ++k)
                out.push_back({Mask::prefix(d.channels, k), p[k - 1]});
            return out;
        }
    };
    return std::visit(Visitor{}, dist);
}

Tensor apply_mask(const Mask& mask, const Tensor& features)
{
    if (mask.size() != features.cols())
        throw DimensionError("mask length " + std::to_string(mask.size()) +
                             " does not match channel dimension " + std::to_string(features.cols()));
    Tensor out = features;
    const std::size_t K = mask.size();
    auto v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!mask.bits[i % K])
            v[i] = 0.0;
    return out;
}

Tensor truncate_to_k(const Tensor& features, std::size_t k)
{
    const std::size_t K = features.cols();
    if (k < 1 || k > K)
        throw DomainError("truncation point must lie in 1.." + std::to_string(K));
    return apply_mask(Mask::prefix(K, k), features);
}

} // namespace nestco::masks
