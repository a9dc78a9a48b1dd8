#pragma once

#include "nestco/lvm.hpp"
#include "nestco/noise.hpp"
#include "nestco/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nestco::analysis {

/// Three-term split of the expected training risk on an enumerable problem.
struct DecompositionReport {
    double lhs_risk = 0.0;
    double bias_term = 0.0;
    double variance_term = 0.0;
    /// h_y_given_x_eps + i_y_eps - expected_log_c1.
    double const_term = 0.0;
    double h_y_given_x_eps = 0.0;
    /// Label information carried by the noise given the input, H(Y|X) - H(Y|X,eps).
    double i_y_eps = 0.0;
    /// E_x E_z log C1(x, z); zero for the plain decomposition.
    double expected_log_c1 = 0.0;
    double residual = 0.0;

    std::vector<double> bias_per_x;
    std::vector<double> variance_per_x;
};

/// Exact decomposition by summation; throws DomainError on malformed tables.
DecompositionReport decompose_risk(const lvm::EnumerableProblem& problem);

/// Teacher confidences for every (x, y), row-major [inputs][labels].
struct TeacherTable {
    std::size_t inputs = 0;
    std::size_t labels = 0;
    std::vector<double> q_t;

    double operator()(std::size_t x, std::size_t y) const { return q_t[x * labels + y]; }
    static TeacherTable from_scores(const lvm::EnumerableProblem& problem, const lvm::TeacherScores& scores);
};

struct CoTeachingReport {
    /// Decomposition of E[q_t L_q] with the taught decoder q_co and its
    /// normalized geometric mean exp E_z log q_co as the ensemble.
    DecompositionReport taught;
    /// decompose_risk on the same problem.
    DecompositionReport plain;

    std::vector<double> alpha; // [inputs][labels]
    std::vector<double> c1;    // [inputs][masks]
    std::vector<double> c2;    // [inputs]

    /// exp(q_t) q~ / C2, the form the alpha conditions refer to. [inputs][labels]
    std::vector<double> tilde_q_co_closed;
    /// Per-x KL(p || closed form) and E_z KL(closed form || q_co).
    std::vector<double> bias_co_per_x;
    std::vector<double> variance_co_per_x;
    double bias_co = 0.0;
    double variance_co = 0.0;
    /// max |closed form - geometric ensemble| over (x, y).
    double closed_form_gap = 0.0;

    /// alpha(y|x) <= 1 for every y with p(y|x) > 0.
    std::vector<std::uint8_t> alpha_le_one;
    /// alpha(y|x) <= C1(x, z) for every y and every z with P_M(z) > 0.
    std::vector<std::uint8_t> alpha_le_c1;
    std::vector<std::uint8_t> bias_decreased;
    std::vector<std::uint8_t> variance_increased;

    bool all_alpha_le_one = false;
    bool all_alpha_le_c1 = false;
    bool c1_le_one = false;
    bool c2_positive = false;

    /// Per-x implications that failed: condition held, inequality did not.
    std::size_t bias_violations = 0;
    std::size_t variance_violations = 0;
};

/// Slack used when comparing condition and inequality sides.
inline constexpr double condition_slack = 1e-12;

/// Throws DomainError if any q_t is outside (0, 1].
CoTeachingReport decompose_risk_coteaching(const lvm::EnumerableProblem& problem, const TeacherTable& teacher);
CoTeachingReport decompose_risk_coteaching(const lvm::EnumerableProblem& problem,
                                           const lvm::TeacherScores& teacher);

struct RandomProblemConfig {
    std::size_t max_inputs = 4;
    std::size_t max_noises = 3;
    std::size_t max_labels = 5;
    std::size_t max_masks = 4;
    /// Chance that a label is left out of the support of p(y|x).
    double label_dropout = 0.4;
    bool dirac_mask = false;
    /// Labels independent of the noise variable.
    bool noiseless = false;
};

lvm::EnumerableProblem random_problem(Rng& rng, const RandomProblemConfig& cfg = {});

enum class TeacherKind {
    uniform,   ///< q_t ~ U(0.05, 1) everywhere
    confident, ///< one high value on the support of p(y|x), low values elsewhere
    ones,      ///< q_t = 1
    mixed,     ///< per x, one of the above
};

TeacherTable random_teacher(const lvm::EnumerableProblem& problem, TeacherKind kind, Rng& rng);

// ---------------------------------------------------------------------------

struct ProbeConfig {
    std::size_t hidden = 16;
    std::size_t epochs = 150;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    /// Share of rows used to fit the probe; the rest measure its cross-entropy.
    double train_fraction = 0.5;
    std::size_t min_examples = 20;
    std::uint64_t seed = 0;
};

/// Test cross-entropy of a one-hidden-layer probe predicting the label from a
/// single scalar feature, clamped to [0, log C].
double probe_entropy(std::span<const double> feature, std::span<const int> labels, std::size_t classes,
                     const ProbeConfig& cfg);

/// Plug-in H(Y) on the probe's test rows.
double marginal_entropy(std::span<const int> labels, std::size_t classes, const ProbeConfig& cfg);

/// Activations at the mask boundary, [n, K]: Z = M * f(x) with a fresh mask per
/// row for masked models, Z~ = f(x) for unmasked ones.
Tensor channel_features(const lvm::LatentModel& model, const Tensor& x, Rng& rng);

double estimate_channel_entropy(const lvm::LatentModel& model, const noise::LabeledData& data, std::size_t k,
                                const ProbeConfig& cfg);

struct ChannelInfoReport {
    std::vector<double> entropy; // per channel, index 0 is channel 1
    std::vector<double> info;    // marginal_entropy - entropy
    double marginal_entropy = 0.0;
    std::size_t classes = 0;
};

/// One probe per channel, run in parallel; probe k uses seed split by k.
ChannelInfoReport channel_info(const lvm::LatentModel& model, const noise::LabeledData& data,
                               const ProbeConfig& cfg);

struct SortingStats {
    double spearman = 0.0;
    /// Pairs i < j with info_i < info_j.
    std::size_t violations = 0;
    std::size_t pairs = 0;
};

SortingStats check_sorting(std::span<const double> info);
SortingStats check_sorting(const ChannelInfoReport& report);

/// Spearman correlation with average ranks; 0 when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace nestco::analysis
