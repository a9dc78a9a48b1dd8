#include "nestco/optim.hpp"

#include "nestco/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nestco {

void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum,
              double weight_decay, SgdState& state, std::size_t first_trainable_layer)
{
    if (!(lr > 0.0))
        throw DomainError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw DomainError("momentum must lie in [0, 1)");
    if (grads.layers() != params.layers())
        throw DimensionError("gradient layer count does not match parameters");

    auto p = params.mutable_tensors();
    const auto g = grads.tensors();
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i]->shape() != g[i]->shape())
            throw DimensionError("gradient shape does not match parameter shape");

    if (!state.initialized) {
        state.velocity = grads; // shape donor
        for (auto* t : state.velocity.mutable_tensors())
            for (double& v : t->values())
                v = 0.0;
        state.initialized = true;
    }
    auto v = state.velocity.mutable_tensors();
    if (v.size() != p.size())
        throw DimensionError("optimizer state does not match parameters");

    for (std::size_t i = 2 * first_trainable_layer; i < p.size(); ++i) {
        auto pv = p[i]->values();
        auto gv = g[i]->values();
        auto vv = v[i]->values();
        for (std::size_t j = 0; j < pv.size(); ++j) {
            const double grad = gv[j] + weight_decay * pv[j];
            vv[j] = momentum * vv[j] + grad;
            pv[j] -= lr * vv[j];
        }
    }
}

std::string to_string(LrDecay d)
{
    switch (d) {
    case LrDecay::none:
        return "none";
    case LrDecay::step:
        return "step";
    case LrDecay::cosine:
        return "cosine";
    }
    return "none";
}

LrDecay lr_decay_from_string(const std::string& s)
{
    if (s == "none")
        return LrDecay::none;
    if (s == "step")
        return LrDecay::step;
    if (s == "cosine")
        return LrDecay::cosine;
    throw DomainError("unknown learning-rate decay '" + s + "'");
}

void LrSchedule::validate() const
{
    if (!(base > 0.0))
        throw DomainError("base learning rate must be positive");
    if (decay == LrDecay::cosine && (!(final_lr >= 0.0) || total_epochs < 1))
        throw DomainError("cosine decay needs final_lr >= 0 and total_epochs >= 1");
    if (decay == LrDecay::step && !(gamma > 0.0))
        throw DomainError("step decay factor must be positive");
}

double lr_at(const LrSchedule& s, std::size_t iteration, std::size_t epoch)
{
    if (iteration < s.warmup_iterations)
        return s.base * static_cast<double>(iteration) / static_cast<double>(s.warmup_iterations);

    switch (s.decay) {
    case LrDecay::none:
        return s.base;
    case LrDecay::step: {
        const auto passed = std::count_if(s.milestones.begin(), s.milestones.end(),
                                          [epoch](std::size_t m) { return epoch >= m; });
        return s.base * std::pow(s.gamma, static_cast<double>(passed));
    }
    case LrDecay::cosine: {
        const double span = static_cast<double>(std::max<std::size_t>(s.total_epochs - 1, 1));
        const double t = std::min(static_cast<double>(epoch) / span, 1.0);
        return s.final_lr + (s.base - s.final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    }
    }
    return s.base;
}

} // namespace nestco
