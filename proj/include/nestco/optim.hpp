#pragma once

#include "nestco/mlp.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace nestco {

/// Momentum buffers, one per parameter tensor. Lazily sized on first step.
struct SgdState {
    ParamSet velocity;
    bool initialized = false;
};

/// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
/// Layers below `first_trainable_layer` are left untouched (encoder freezing).
void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum,
              double weight_decay, SgdState& state, std::size_t first_trainable_layer = 0);

enum class LrDecay { none, step, cosine };

std::string to_string(LrDecay d);
LrDecay lr_decay_from_string(const std::string& s);

/// Linear warm-up from 0 over `warmup_iterations`, then the configured decay.
struct LrSchedule {
    double base = 0.1;
    std::size_t warmup_iterations = 0;
    LrDecay decay = LrDecay::none;
    /// Step decay: multiply by `gamma` at each milestone epoch reached.
    std::vector<std::size_t> milestones;
    double gamma = 0.1;
    /// Cosine decay: reaches `final_lr` at epoch `total_epochs - 1`.
    double final_lr = 0.0;
    std::size_t total_epochs = 1;

    void validate() const;
};

double lr_at(const LrSchedule& schedule, std::size_t iteration, std::size_t epoch);

} // namespace nestco
