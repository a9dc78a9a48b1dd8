#pragma once

#include "nestco/rng.hpp"
#include "nestco/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace nestco::masks {

/// Binary channel mask M applied as Z = M * f(X).
struct Mask {
    std::vector<std::uint8_t> bits;

    Mask() = default;
    explicit Mask(std::vector<std::uint8_t> b) : bits(std::move(b)) {}
    static Mask ones(std::size_t channels);
    /// Ones on channels [0, k), zeros after.
    static Mask prefix(std::size_t channels, std::size_t k);

    std::size_t size() const noexcept { return bits.size(); }
    std::size_t popcount() const noexcept;
    /// True when the bits are a run of ones followed by zeros.
    bool is_prefix() const noexcept;
    /// Number of leading ones.
    std::size_t prefix_length() const noexcept;

    friend bool operator==(const Mask&, const Mask&) = default;
};

/// Independent per-channel Bernoulli masking with drop rate p_drop.
struct DropoutSpec {
    double p_drop = 0.0;
    std::size_t channels = 0;

    void validate() const;
};

/// Prefix masking with truncation point k ~ Categorical(p_k), p_k proportional
/// to exp(-k^2 / (2 sigma^2)), k = 1..K.
struct NestedSpec {
    double sigma = 1.0;
    std::size_t channels = 0;

    void validate() const;
};

/// Masking disabled; every channel kept.
struct NoMask {
    std::size_t channels = 0;
};

using MaskDistribution = std::variant<NoMask, DropoutSpec, NestedSpec>;

std::size_t channel_count(const MaskDistribution& dist);
bool is_nested(const MaskDistribution& dist);

/// Continuation probabilities of the sequential Bernoulli construction:
/// channel k+1 is kept iff channel k was kept and eps_k ~ Bernoulli(eta_k).
struct ChainParams {
    std::vector<double> eta;
};

/// Normalized truncation probabilities p_1..p_K, computed in log space.
std::vector<double> categorical_probs(const NestedSpec& spec);

Mask sample_dropout_mask(const DropoutSpec& spec, Rng& rng);
/// Draws k from categorical_probs and keeps channels 1..k.
Mask sample_nested_mask(const NestedSpec& spec, Rng& rng);
/// Same law as sample_nested_mask, but built from sequential gated Bernoulli draws.
Mask sample_nested_mask_chain(const ChainParams& chain, Rng& rng);
Mask sample_mask(const MaskDistribution& dist, Rng& rng);

/// eta_1 = 1 - p_1, eta_k = (1 - P_k) / (1 - P_{k-1}) with P_k the prefix sums.
/// Once a prefix sum reaches one the remaining eta are zero.
ChainParams chain_params_from_categorical(std::span<const double> p);
/// p_1 = 1 - eta_1, p_k = (prod_{j<k} eta_j)(1 - eta_k), p_K = prod_j eta_j.
std::vector<double> categorical_from_chain(const ChainParams& chain);

/// E[M] per channel: 1 - p_drop for Dropout, P(k >= i) for Nested.
std::vector<double> expected_mask(const MaskDistribution& dist);

/// Full support of the mask law with exact probabilities. Dropout support is
/// 2^K masks, so this is only meant for small K.
struct WeightedMask {
    Mask mask;
    double probability;
};
std::vector<WeightedMask> enumerate_support(const MaskDistribution& dist);

/// Element-wise product along the channel (last) dimension.
Tensor apply_mask(const Mask& mask, const Tensor& features);
/// Keeps the first k channels; k in 1..K.
Tensor truncate_to_k(const Tensor& features, std::size_t k);

} // namespace nestco::masks
