#pragma once

#include "nestco/analysis.hpp"
#include "nestco/lvm.hpp"
#include "nestco/noise.hpp"
#include "nestco/trainer.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

// End-to-end pipelines on Gaussian-blob classification shared by the CLI and
// the acceptance suite.

namespace nestco::exp {

struct BlobData {
    std::size_t classes = 4;
    std::size_t dim = 2;
    double separation = 3.0;
    std::size_t train_per_class = 250;
    std::size_t val_per_class = 50;
    std::size_t test_per_class = 250;
    noise::NoiseSpec noise;

    void validate() const;
};

struct Splits {
    noise::NoisyDataset train;
    noise::LabeledData validation;
    noise::LabeledData test;
};

/// Train, validation and test blobs from independent streams of `seed`; only
/// the training split is corrupted.
Splits make_blob_splits(const BlobData& cfg, std::uint64_t seed);

struct ModelConfig {
    /// Hidden widths; the network is dim -> hidden... -> classes.
    std::vector<std::size_t> hidden{32, 16};
    /// Boundary carrying the mask, 1 <= mask_layer <= hidden.size().
    std::size_t mask_layer = 2;
    double p_drop = 0.0;
    double sigma_nest = 0.0;

    /// Throws DomainError when both families are active.
    void validate() const;
    /// Also rejects configurations with no compression at all.
    void require_compression() const;
    masks::MaskDistribution mask() const;
    MlpSpec spec(std::size_t in, std::size_t classes) const;
};

lvm::LatentModel make_model(const ModelConfig& cfg, std::size_t in, std::size_t classes, std::uint64_t seed);

struct TwoStageConfig {
    BlobData data;
    ModelConfig model;
    train::StageOneConfig stage_one;
    train::CoTeachConfig stage_two;
    std::uint64_t seed = 0;
    bool concurrent = true;
};

/// Blobs with 40% symmetric noise, a Nested model and budgets that finish in
/// seconds on one core.
TwoStageConfig default_two_stage();

struct TwoStageResult {
    std::array<lvm::LatentModel, 2> stage_one_models;
    std::array<lvm::LatentModel, 2> models;
    std::array<train::TrainReport, 2> stage_one;
    train::TrainReport stage_two;
    std::array<double, 2> stage_one_accuracy{};
    double stage_one_ensemble_accuracy = 0.0;
    double ensemble_accuracy = 0.0;
    /// Over all stage-two selections.
    double selected_clean_fraction = 0.0;
    double train_noise_rate = 0.0;
};

struct StageOneResult {
    std::array<lvm::LatentModel, 2> models;
    std::array<train::TrainReport, 2> reports;
    std::array<double, 2> accuracy{};
    double ensemble_accuracy = 0.0;
    /// Validation k* per model, 0 for Dropout models.
    std::array<std::size_t, 2> kstar{};
    double train_noise_rate = 0.0;
};

/// Two independently seeded models trained on the same noisy split.
StageOneResult run_stage_one(const TwoStageConfig& cfg);

/// Stage one followed by co-teaching.
TwoStageResult run_two_stage(const TwoStageConfig& cfg);

/// Stage two only, starting from given stage-one models.
TwoStageResult run_coteach(const TwoStageConfig& cfg, const lvm::LatentModel& m1, const lvm::LatentModel& m2);

struct ChannelInfoConfig {
    BlobData data;
    /// sigma_nest > 0 for the compressed model; the baseline reuses the
    /// architecture without a mask.
    ModelConfig model{{32, 16}, 2, 0.0, 6.0};
    train::StageOneConfig training;
    analysis::ProbeConfig probe;
    std::uint64_t seed = 0;
};

struct ChannelInfoResult {
    analysis::ChannelInfoReport nested;
    analysis::ChannelInfoReport baseline;
    analysis::SortingStats nested_stats;
    analysis::SortingStats baseline_stats;
    double nested_accuracy = 0.0;
    double baseline_accuracy = 0.0;
};

ChannelInfoConfig default_channel_info();

ChannelInfoResult run_channel_info(const ChannelInfoConfig& cfg);

struct TheoryConfig {
    std::size_t instances = 100;
    std::size_t dirac_instances = 25;
    std::size_t ones_instances = 25;
    double residual_tolerance = 1e-8;
    std::uint64_t seed = 0;
};

struct IdentityRow {
    std::size_t id = 0;
    std::string suite; // "random" | "dirac" | "ones"
    double lhs = 0.0;
    double bias = 0.0;
    double variance = 0.0;
    double const_term = 0.0;
    double residual = 0.0;
    /// Suite "ones": max field difference between the taught and plain reports.
    double max_report_gap = 0.0;
    bool pass = false;
};

struct CoTeachingRow {
    std::size_t id = 0;
    double residual = 0.0;
    double bias = 0.0;
    double bias_co = 0.0;
    double variance = 0.0;
    double variance_co = 0.0;
    double max_c1 = 0.0;
    double closed_form_gap = 0.0;
    bool all_alpha_le_one = false;
    bool all_alpha_le_c1 = false;
    bool c1_le_one = false;
    std::size_t bias_violations = 0;
    std::size_t variance_violations = 0;
    bool pass = false;
};

struct TheoryResult {
    std::vector<IdentityRow> identity;
    std::vector<CoTeachingRow> coteaching;
    std::size_t identity_failures = 0;
    std::size_t coteaching_failures = 0;

    bool pass() const { return identity_failures == 0 && coteaching_failures == 0; }
};

/// Random enumerable problems for the bias-variance identity (plus Dirac-mask
/// and q_t = 1 sub-suites) and the co-teaching decomposition with mixed teachers.
TheoryResult run_theory_suite(const TheoryConfig& cfg);

} // namespace nestco::exp
