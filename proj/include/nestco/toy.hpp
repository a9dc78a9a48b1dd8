#pragma once

#include "nestco/lvm.hpp"
#include "nestco/noise.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

// One-dimensional regression y = x + noise fitted by a baseline MLP, Nested
// Dropout MLPs read out at several truncation points, and Dropout MLPs.

namespace nestco::toy {

struct ToyConfig {
    std::size_t n_points = 64;
    double x_min = 0.0;
    double x_max = 10.0;
    double noise_std = 1.0;

    std::vector<std::size_t> widths{1, 64, 128, 1};
    std::size_t mask_layer = 2;
    double sigma_nest = 200.0;
    std::vector<std::size_t> ks{1, 10, 100};
    std::vector<double> p_drops{0.9, 0.7, 0.5, 0.3};

    std::size_t epochs = 20000;
    double lr = 0.01;
    double final_lr = 1e-4;
    std::size_t warmup = 500;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t n_mask_samples = 2;

    /// Feed (x - mean) / std to the network.
    bool standardize_input = true;
    /// Fit (y - mean) / std and map predictions back.
    bool standardize_target = false;
    /// Place first-layer ReLU kinks uniformly over the input range.
    bool spread_input_kinks = true;
    /// Shift masked-layer biases so every channel starts active on the data.
    bool activate_masked_layer = true;
    double activation_margin = 0.1;

    /// Evaluation grid for the prediction curves.
    std::size_t grid_points = 201;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Variant {
    std::string name;   // "baseline", "nested_k1", "dropout_p0.9", ...
    std::string family; // "baseline" | "nested" | "dropout"
    double parameter = 0.0;
    std::vector<double> grid_prediction;
    std::vector<double> train_prediction;
    /// Mean squared error on the training inputs against y = x.
    double mse_clean = 0.0;
    /// Mean squared error against the noisy training targets.
    double mse_noisy = 0.0;
    double final_loss = 0.0;
};

struct ToyResult {
    noise::RegressionDataset data;
    std::vector<double> grid_x;
    std::vector<Variant> variants;

    const Variant& find(const std::string& name) const;
};

/// Initial parameters shared by every variant: He-normal weights, uniform
/// fan-in biases, then (optionally) data-dependent masked-layer biases.
ParamSet initial_params(const ToyConfig& cfg, const Tensor& x_in);

/// Trains every variant; `with_dropout = false` skips the Dropout grid.
ToyResult run_toy_regression(const ToyConfig& cfg, bool with_dropout = true);

} // namespace nestco::toy
