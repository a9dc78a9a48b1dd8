#pragma once

#include "nestco/masks.hpp"
#include "nestco/mlp.hpp"
#include "nestco/rng.hpp"
#include "nestco/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace nestco::lvm {

/// Floor applied to decoder probabilities before taking logs.
inline constexpr double probability_floor = 1e-12;

enum class Task { classification, regression };

/// q(y|x) = E_{M ~ P_M} q(y | M * f(x)).
///
/// The encoder f is layers [0, mask_layer) of `spec`, the decoder d the
/// remaining layers; for classification the decoder ends in a softmax.
/// Regression models use a fixed-variance Gaussian decoder, so -log q(y|z)
/// is the squared error up to an additive constant.
struct LatentModel {
    MlpSpec spec;
    ParamSet params;
    masks::MaskDistribution mask = masks::NoMask{};
    std::size_t mask_layer = 1;
    Task task = Task::classification;

    static LatentModel create(MlpSpec spec, masks::MaskDistribution mask, std::size_t mask_layer,
                              Rng& rng, Task task = Task::classification);

    std::size_t channels() const { return spec.widths.at(mask_layer); }
    std::size_t classes() const { return spec.output_width(); }
    void validate() const;
};

struct LossResult {
    /// Mean of -log q(y|z) over examples and mask draws.
    double loss = 0.0;
    /// Mean over mask draws, per example (unweighted).
    std::vector<double> per_example;
    /// Gradient of `loss`; empty when not requested.
    ParamSet grads;
    /// Count of probabilities raised to the floor.
    std::size_t clamped = 0;
};

/// Teacher confidence q_t(y|x) for each row of a batch, in (0, 1].
/// NaN marks a missing score.
struct TeacherScores {
    std::vector<double> scores;
};

/// Monte-Carlo estimate of L_q = E_{q(z|x)}[-log q(y|z)] with one fresh mask
/// per example per draw.
LossResult loss_Lq(const LatentModel& model, const Tensor& x, std::span<const int> labels,
                   std::size_t n_mask_samples, Rng& rng, bool with_grad = true);

/// Regression counterpart: squared error through the masked network.
LossResult loss_Lq(const LatentModel& model, const Tensor& x, std::span<const double> targets,
                   std::size_t n_mask_samples, Rng& rng, bool with_grad = true);

/// Per-example weighted L_q; weights multiply each example's loss and gradient.
LossResult weighted_loss_Lq(const LatentModel& model, const Tensor& x, std::span<const int> labels,
                            std::span<const double> weights, std::size_t n_mask_samples, Rng& rng,
                            bool with_grad = true);

/// Co-teaching student loss q_t(y|x) * L_q(x, y), averaged over the batch.
LossResult student_loss_co(const LatentModel& model, const TeacherScores& teacher, const Tensor& x,
                           std::span<const int> labels, std::size_t n_mask_samples, Rng& rng,
                           bool with_grad = true);

struct McAverage {
    std::size_t samples = 1;
    std::uint64_t seed = 0;
};
struct Truncate {
    std::size_t k = 1;
};
struct ExpectedMask {};

using PredictMode = std::variant<McAverage, Truncate, ExpectedMask>;

/// Class distribution [B, C] (classification) or prediction [B, 1]
/// (regression) for each row of x.
Tensor predict(const LatentModel& model, const Tensor& x, const PredictMode& mode);

/// Mask-free prediction used for loss ranking: all channels for Nested and
/// unmasked models, E[M] scaling for Dropout.
Tensor deterministic_predict(const LatentModel& model, const Tensor& x);
PredictMode deterministic_mode(const LatentModel& model);

/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& logits);

/// Fully enumerable latent-variable problem.
///
/// Latent states are pairs (x, m): z = m * f(x) with mask m drawn from the
/// extrinsic law P_M, so the decoder table is indexed by (x, m).
struct EnumerableProblem {
    std::size_t inputs = 0;
    std::size_t noises = 0;
    std::size_t labels = 0;
    std::size_t masks = 0;

    std::vector<double> p_x;         // [inputs]
    std::vector<double> p_noise;     // [noises]
    std::vector<double> label_table; // p(y | x, eps), [inputs][noises][labels]
    std::vector<double> mask_probs;  // P_M, [masks]
    std::vector<double> decoder;     // q(y | x, m), [inputs][masks][labels]

    double p_label(std::size_t x, std::size_t e, std::size_t y) const
    {
        return label_table[(x * noises + e) * labels + y];
    }
    double q(std::size_t x, std::size_t m, std::size_t y) const { return decoder[(x * masks + m) * labels + y]; }

    /// p(y|x) = E_eps p(y|x, eps).
    std::vector<double> p_label_given_x(std::size_t x) const;

    /// Throws DomainError unless every table is a valid distribution and the
    /// decoder is strictly positive.
    void validate() const;
};

/// Normalized exp E_{q(z|x)} log q(y|z).
std::vector<double> tilde_q(const EnumerableProblem& problem, std::size_t x);
/// Unnormalized exp E_{q(z|x)} log q(y|z); bounded above by q(y|x).
std::vector<double> tilde_q_unnormalized(const EnumerableProblem& problem, std::size_t x);
/// Exact mixture q(y|x) = E_{q(z|x)} q(y|z).
std::vector<double> mixture_q(const EnumerableProblem& problem, std::size_t x);
/// Exact L_q(x, y) = E_{q(z|x)}[-log q(y|z)].
double exact_Lq(const EnumerableProblem& problem, std::size_t x, std::size_t y);

} // namespace nestco::lvm
