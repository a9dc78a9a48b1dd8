#include "nestco/mlp.hpp"

#include "nestco/errors.hpp"
#include "nestco/kernels.hpp"

#include <atomic>
#include <cmath>

namespace nestco {

std::string to_string(Activation a)
{
    return a == Activation::relu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& s)
{
    if (s == "relu")
        return Activation::relu;
    if (s == "identity")
        return Activation::identity;
    throw DomainError("unknown activation '" + s + "'");
}

MlpSpec MlpSpec::relu_chain(std::vector<std::size_t> widths)
{
    MlpSpec spec;
    spec.widths = std::move(widths);
    if (spec.widths.size() >= 2) {
        spec.activations.assign(spec.widths.size() - 1, Activation::relu);
        spec.activations.back() = Activation::identity;
    }
    return spec;
}

void MlpSpec::validate() const
{
    if (widths.size() < 2)
        throw DimensionError("MLP needs at least an input and an output width");
    if (activations.size() != widths.size() - 1)
        throw DimensionError("MLP needs one activation per layer");
    for (auto w : widths)
        if (w == 0)
            throw DimensionError("MLP layer widths must be positive");
    if (activations.back() != Activation::identity)
        throw DimensionError("last MLP layer must have identity activation");
}

// ---------------------------------------------------------------------------

namespace {

std::atomic<std::uint64_t> next_version{1};

} // namespace

ParamSet::ParamSet(const MlpSpec& spec)
{
    spec.validate();
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        weights_.emplace_back(std::vector<std::size_t>{spec.widths[l + 1], spec.widths[l]});
        biases_.emplace_back(std::vector<std::size_t>{spec.widths[l + 1]});
    }
    touch();
}

ParamSet ParamSet::init(const MlpSpec& spec, Rng& rng)
{
    ParamSet p(spec);
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const double fan_in = static_cast<double>(spec.widths[l]);
        const double gain = spec.activations[l] == Activation::relu ? 2.0 : 1.0;
        const double stddev = std::sqrt(gain / fan_in);
        for (double& w : p.weights_[l].values())
            w = rng.normal(0.0, stddev);
    }
    p.touch();
    return p;
}

Tensor& ParamSet::mutable_weight(std::size_t l)
{
    touch();
    return weights_.at(l);
}

Tensor& ParamSet::mutable_bias(std::size_t l)
{
    touch();
    return biases_.at(l);
}

std::size_t ParamSet::size() const noexcept
{
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += weights_[l].size() + biases_[l].size();
    return n;
}

std::vector<const Tensor*> ParamSet::tensors() const
{
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<Tensor*> ParamSet::mutable_tensors()
{
    touch();
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

bool ParamSet::matches(const MlpSpec& spec) const noexcept
{
    if (weights_.size() != spec.layers())
        return false;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (weights_[l].shape() != std::vector<std::size_t>{spec.widths[l + 1], spec.widths[l]})
            return false;
        if (biases_[l].shape() != std::vector<std::size_t>{spec.widths[l + 1]})
            return false;
    }
    return true;
}

void ParamSet::touch() noexcept
{
    version_ = next_version.fetch_add(1, std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------

struct TapeAccess {
    static ForwardResult run(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                             Tensor scale, std::size_t mask_layer);
    static ParamSet backward(const Tape& tape, const ParamSet& params, const Tensor& loss_grad);
};

namespace {

Tensor as_batch(const Tensor& x)
{
    if (x.rank() == 1)
        return Tensor({1, x.size()}, std::vector<double>(x.values().begin(), x.values().end()));
    return x;
}

Tensor squeezed(const Tensor& t)
{
    return Tensor({t.cols()}, std::vector<double>(t.values().begin(), t.values().end()));
}

void check_inputs(const MlpSpec& spec, const ParamSet& params, const Tensor& x)
{
    spec.validate();
    if (!params.matches(spec))
        throw DimensionError("parameter shapes do not match MLP spec");
    if (x.rank() < 1 || x.rank() > 2 || x.cols() != spec.input_width())
        throw DimensionError("input shape " + x.shape_string() + " does not match input width " +
                             std::to_string(spec.input_width()));
    if (!x.all_finite())
        throw NumericError("non-finite value in MLP input");
}

void check_mask_layer(const MlpSpec& spec, std::size_t mask_layer)
{
    if (mask_layer < 1 || mask_layer >= spec.layers())
        throw DimensionError("mask boundary " + std::to_string(mask_layer) +
                             " is not a hidden layer of the MLP");
}

} // namespace

ForwardResult TapeAccess::run(const MlpSpec& spec, const ParamSet& params, const Tensor& x_in,
                              Tensor scale, std::size_t mask_layer)
{
    Tape tape;
    tape.spec_ = spec;
    tape.squeeze_ = x_in.rank() == 1;
    tape.mask_layer_ = mask_layer;
    tape.params_version_ = params.version();
    tape.post_.push_back(as_batch(x_in));

    const std::size_t B = tape.post_.front().rows();
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const kernels::LinearShape s{B, spec.widths[l], spec.widths[l + 1]};
        Tensor pre({B, s.out});
        kernels::linear_forward(s, tape.post_[l].values(), params.weight(l).values(),
                                params.bias(l).values(), pre.values());
        Tensor post = pre;
        if (spec.activations[l] == Activation::relu)
            for (double& v : post.values())
                v = v > 0.0 ? v : 0.0;
        if (!scale.empty() && l + 1 == mask_layer) {
            tape.unmasked_ = post;
            auto pv = post.values();
            auto sv = scale.values();
            for (std::size_t i = 0; i < pv.size(); ++i)
                pv[i] *= sv[i];
        }
        tape.pre_.push_back(std::move(pre));
        tape.post_.push_back(std::move(post));
    }
    tape.scale_ = std::move(scale);

    Tensor out = tape.squeeze_ ? squeezed(tape.post_.back()) : tape.post_.back();
    return {std::move(out), std::move(tape)};
}

ForwardResult forward(const MlpSpec& spec, const ParamSet& params, const Tensor& x)
{
    check_inputs(spec, params, x);
    return TapeAccess::run(spec, params, x, Tensor{}, 0);
}

ForwardResult forward(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                      std::span<const masks::Mask> mask_rows, std::size_t mask_layer)
{
    check_inputs(spec, params, x);
    if (mask_rows.empty())
        return TapeAccess::run(spec, params, x, Tensor{}, 0);
    check_mask_layer(spec, mask_layer);

    const std::size_t B = x.rows();
    const std::size_t K = spec.widths[mask_layer];
    if (mask_rows.size() != 1 && mask_rows.size() != B)
        throw DimensionError("expected one mask or one mask per row, got " +
                             std::to_string(mask_rows.size()) + " for " + std::to_string(B) + " rows");
    Tensor scale({B, K});
    for (std::size_t r = 0; r < B; ++r) {
        const auto& m = mask_rows.size() == 1 ? mask_rows[0] : mask_rows[r];
        if (m.size() != K)
            throw DimensionError("mask length " + std::to_string(m.size()) +
                                 " does not match masked width " + std::to_string(K));
        for (std::size_t c = 0; c < K; ++c)
            scale.at(r, c) = m.bits[c] ? 1.0 : 0.0;
    }
    return TapeAccess::run(spec, params, x, std::move(scale), mask_layer);
}

ForwardResult forward_scaled(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                             const Tensor& scale, std::size_t mask_layer)
{
    check_inputs(spec, params, x);
    check_mask_layer(spec, mask_layer);
    const std::size_t B = x.rows();
    const std::size_t K = spec.widths[mask_layer];
    if (scale.cols() != K || (scale.rank() == 2 && scale.rows() != B) || scale.rank() > 2)
        throw DimensionError("channel scale shape " + scale.shape_string() + " does not match batch");
    if (!scale.all_finite())
        throw NumericError("non-finite channel scale");
    Tensor full({B, K});
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t c = 0; c < K; ++c)
            full.at(r, c) = scale.rank() == 1 ? scale[c] : scale.at(r, c);
    return TapeAccess::run(spec, params, x, std::move(full), mask_layer);
}

ParamSet TapeAccess::backward(const Tape& tape, const ParamSet& params, const Tensor& loss_grad)
{
    if (tape.empty())
        throw UsageError("backward called on an empty tape");
    if (tape.params_version_ != params.version())
        throw UsageError("tape is stale: parameters changed since the forward pass");

    const MlpSpec& spec = tape.spec_;
    const std::size_t B = tape.batch();
    const std::size_t L = spec.layers();
    const Tensor& out = tape.post_.back();
    if (loss_grad.size() != out.size() || loss_grad.cols() != out.cols())
        throw DimensionError("loss gradient shape " + loss_grad.shape_string() +
                             " does not match output " + out.shape_string());

    ParamSet grads(spec);
    Tensor delta({B, spec.output_width()},
                 std::vector<double>(loss_grad.values().begin(), loss_grad.values().end()));

    for (std::size_t l = L; l-- > 0;) {
        // delta holds d loss / d post_[l + 1]; turn it into d loss / d pre_[l].
        if (!tape.scale_.empty() && l + 1 == tape.mask_layer_) {
            auto dv = delta.values();
            auto sv = tape.scale_.values();
            for (std::size_t i = 0; i < dv.size(); ++i)
                dv[i] *= sv[i];
        }
        if (spec.activations[l] == Activation::relu) {
            auto dv = delta.values();
            auto pv = tape.pre_[l].values();
            for (std::size_t i = 0; i < dv.size(); ++i)
                if (!(pv[i] > 0.0))
                    dv[i] = 0.0;
        }
        const kernels::LinearShape s{B, spec.widths[l], spec.widths[l + 1]};
        kernels::linear_backward_params(s, tape.post_[l].values(), delta.values(),
                                        grads.mutable_weight(l).values(), grads.mutable_bias(l).values());
        if (l > 0) {
            Tensor prev({B, s.in});
            kernels::linear_backward_input(s, params.weight(l).values(), delta.values(), prev.values());
            delta = std::move(prev);
        }
    }
    return grads;
}

ParamSet backward(const Tape& tape, const ParamSet& params, const Tensor& loss_grad)
{
    return TapeAccess::backward(tape, params, loss_grad);
}

Tensor Tape::replay(const ParamSet& params) const
{
    if (empty())
        throw UsageError("cannot replay an empty tape");
    Tensor x = squeeze_ ? squeezed(post_.front()) : post_.front();
    return TapeAccess::run(spec_, params, x, scale_, mask_layer_).output;
}

} // namespace nestco
