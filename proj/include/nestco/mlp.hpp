#pragma once

#include "nestco/masks.hpp"
#include "nestco/rng.hpp"
#include "nestco/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nestco {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Chain of fully connected layers. widths[0] is the input width; layer l maps
/// widths[l] -> widths[l + 1] and applies activations[l].
struct MlpSpec {
    std::vector<std::size_t> widths;
    std::vector<Activation> activations;

    /// ReLU on every layer but the last, which is identity.
    static MlpSpec relu_chain(std::vector<std::size_t> widths);

    std::size_t layers() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }
    std::size_t input_width() const noexcept { return widths.front(); }
    std::size_t output_width() const noexcept { return widths.back(); }

    /// Throws DimensionError on a malformed spec.
    void validate() const;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Per-layer weights [out, in] and biases [out].
///
/// Every mutation draws a fresh version token; tapes remember the token they
/// were recorded against so a backward pass through stale weights is caught.
class ParamSet {
public:
    ParamSet() = default;
    /// All-zero parameters shaped for `spec`.
    explicit ParamSet(const MlpSpec& spec);

    /// He-normal (fan-in) weights for ReLU layers, LeCun-normal for identity
    /// layers, zero biases.
    static ParamSet init(const MlpSpec& spec, Rng& rng);

    std::size_t layers() const noexcept { return weights_.size(); }
    const Tensor& weight(std::size_t l) const { return weights_.at(l); }
    const Tensor& bias(std::size_t l) const { return biases_.at(l); }
    Tensor& mutable_weight(std::size_t l);
    Tensor& mutable_bias(std::size_t l);

    /// Number of scalar parameters.
    std::size_t size() const noexcept;
    /// Visits parameters in serialization order: W0, b0, W1, b1, ...
    std::vector<const Tensor*> tensors() const;
    std::vector<Tensor*> mutable_tensors();

    bool matches(const MlpSpec& spec) const noexcept;
    std::uint64_t version() const noexcept { return version_; }

    friend bool operator==(const ParamSet& a, const ParamSet& b)
    {
        return a.weights_ == b.weights_ && a.biases_ == b.biases_;
    }

private:
    void touch() noexcept;

    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
    std::uint64_t version_ = 0;
};

/// Forward record of one MLP evaluation over a batch.
class Tape {
public:
    bool empty() const noexcept { return post_.empty(); }

    const MlpSpec& spec() const noexcept { return spec_; }
    const Tensor& input() const { return post_.front(); }
    const Tensor& output() const { return post_.back(); }
    /// Activation leaving boundary l (l = 0 is the input), after masking.
    const Tensor& activation(std::size_t boundary) const { return post_.at(boundary); }
    /// Activation at the masked boundary before the mask is applied.
    const Tensor& unmasked_activation() const { return unmasked_; }
    /// Per-row channel multipliers; empty when no mask was applied.
    const Tensor& channel_scale() const noexcept { return scale_; }
    std::size_t mask_layer() const noexcept { return mask_layer_; }
    std::size_t batch() const noexcept { return empty() ? 0 : post_.front().rows(); }

    /// Re-runs the recorded forward on `params`; bit-identical to output() when
    /// `params` is the parameter set the tape was recorded with.
    Tensor replay(const ParamSet& params) const;

private:
    friend struct TapeAccess;

    MlpSpec spec_;
    std::vector<Tensor> pre_;  // pre-activation of layer l, [B, widths[l+1]]
    std::vector<Tensor> post_; // boundary activations, post_[0] = input
    Tensor unmasked_;
    Tensor scale_;
    std::size_t mask_layer_ = 0;
    std::uint64_t params_version_ = 0;
    bool squeeze_ = false;
};

struct ForwardResult {
    Tensor output;
    Tape tape;
};

/// Unmasked forward. `x` is [B, in] or a single example [in].
ForwardResult forward(const MlpSpec& spec, const ParamSet& params, const Tensor& x);

/// Forward with Z = M * f(X) at hidden boundary `mask_layer`
/// (1 <= mask_layer < spec.layers()). `masks` holds one mask per row, or a
/// single mask broadcast to every row.
ForwardResult forward(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                      std::span<const masks::Mask> masks, std::size_t mask_layer);

/// Forward with real-valued channel multipliers, e.g. E[M] at inference.
/// `scale` is [K] (broadcast) or [B, K].
ForwardResult forward_scaled(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                             const Tensor& scale, std::size_t mask_layer);

/// Gradient of sum_{b,j} loss_grad[b, j] * output[b, j] with respect to every
/// parameter. Batch averaging, if any, belongs in loss_grad.
ParamSet backward(const Tape& tape, const ParamSet& params, const Tensor& loss_grad);

} // namespace nestco
