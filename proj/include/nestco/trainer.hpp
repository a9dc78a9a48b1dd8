#pragma once

#include "nestco/lvm.hpp"
#include "nestco/noise.hpp"
#include "nestco/optim.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nestco::train {

inline constexpr double not_measured = std::numeric_limits<double>::quiet_NaN();

struct StageOneConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 64;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t n_mask_samples = 1;
    /// Drives shuffling and mask draws.
    std::uint64_t seed = 0;

    void validate() const;
};

struct CoTeachConfig {
    double lambda_forget = 0.2;
    std::size_t epochs = 1;
    std::size_t batch_size = 64;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    /// Keeps layers below the mask boundary fixed during fine-tuning.
    bool freeze_encoder = false;
    std::size_t n_mask_samples = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double clean_test_accuracy = not_measured;
    double noisy_train_accuracy = not_measured;
    /// Validation-selected truncation point; 0 for non-Nested models.
    std::size_t kstar = 0;
    /// Share of co-teaching selections whose noisy label is correct.
    double selected_clean_fraction = not_measured;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;

    const EpochRecord& last() const { return epochs.back(); }
};

/// Evaluation hooks. This is the only trainer-side component that can read
/// clean labels; the training loops hand it predictions and selected indices.
class Evaluator {
public:
    Evaluator() = default;
    Evaluator(noise::LabeledData test, std::optional<noise::LabeledData> validation);

    bool has_test() const noexcept { return test_.size() > 0; }
    bool has_validation() const noexcept { return validation_.has_value(); }

    /// k* on the validation set for Nested models, 0 otherwise.
    std::size_t kstar(const lvm::LatentModel& m) const;
    /// Inference mode: truncate(k*) when available, otherwise the deterministic mode.
    lvm::PredictMode inference_mode(const lvm::LatentModel& m) const;

    double test_accuracy(const lvm::LatentModel& m) const;
    double test_accuracy(const lvm::LatentModel& m, const lvm::PredictMode& mode) const;
    double test_accuracy(const lvm::LatentModel& m1, const lvm::LatentModel& m2) const;
    double test_accuracy(const lvm::LatentModel& m1, const lvm::LatentModel& m2,
                         const lvm::PredictMode& mode1, const lvm::PredictMode& mode2) const;

    /// Number of rows in `idx` whose noisy label equals the clean label.
    static std::size_t count_clean(const noise::NoisyDataset& data, std::span<const std::size_t> idx);

private:
    noise::LabeledData test_;
    std::optional<noise::LabeledData> validation_;
};

/// Fraction of rows whose argmax prediction equals `labels`.
double accuracy(const Tensor& probs, std::span<const int> labels);

/// Trains with L_q and one fresh mask per example per forward.
TrainReport train_stage_one(lvm::LatentModel& model, const noise::NoisyDataset& data,
                            const StageOneConfig& cfg, const Evaluator* eval = nullptr);

/// Both stage-one models at once, on separate threads when `concurrent`.
std::pair<TrainReport, TrainReport> train_stage_one_pair(lvm::LatentModel& m1, lvm::LatentModel& m2,
                                                         const noise::NoisyDataset& data,
                                                         const StageOneConfig& cfg1,
                                                         const StageOneConfig& cfg2,
                                                         const Evaluator* eval = nullptr,
                                                         bool concurrent = true);

/// Indices of the ceil((1 - lambda) n) smallest losses, lowest index first on ties,
/// returned in ascending index order.
std::vector<std::size_t> select_small_loss(std::span<const double> losses, double lambda_forget);

/// Per-example cross-entropy under the deterministic forward.
std::vector<double> selection_losses(const lvm::LatentModel& model, const Tensor& x,
                                     std::span<const int> labels);

/// Stage two: every shuffled mini-batch is split into equal halves; each
/// model picks its small-loss subset of its half and the peer trains on it.
/// An odd batch loses its last element before the split.
TrainReport coteach_finetune(lvm::LatentModel& m1, lvm::LatentModel& m2, const noise::NoisyDataset& data,
                             const CoTeachConfig& cfg, const Evaluator* eval = nullptr);

/// Mean of the two models' class distributions.
Tensor ensemble_predict(const lvm::LatentModel& m1, const lvm::LatentModel& m2, const Tensor& x,
                        const lvm::PredictMode& mode);
Tensor ensemble_predict(const lvm::LatentModel& m1, const lvm::LatentModel& m2, const Tensor& x,
                        const lvm::PredictMode& mode1, const lvm::PredictMode& mode2);

/// argmax over k of truncate(k) validation accuracy, smallest k on ties.
std::size_t select_kstar(const lvm::LatentModel& model, const noise::LabeledData& validation);
/// Accuracy of truncate(k) for k = 1..K.
std::vector<double> truncation_accuracies(const lvm::LatentModel& model,
                                          const noise::LabeledData& validation);

struct RegressionConfig {
    std::size_t epochs = 10000;
    LrSchedule lr;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t n_mask_samples = 1;
    std::uint64_t seed = 0;
};

/// Full-batch training of a regression model; returns the per-epoch loss.
std::vector<double> train_regression(lvm::LatentModel& model, const Tensor& x, std::span<const double> y,
                                     const RegressionConfig& cfg);

} // namespace nestco::train
