#pragma once

#include "nestco/rng.hpp"
#include "nestco/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace nestco::noise {

/// Row-stochastic Q with Q(i, j) = P(noisy = j | clean = i).
class TransitionMatrix {
public:
    TransitionMatrix() = default;
    /// Throws DomainError unless `q` is a C x C row-stochastic matrix.
    TransitionMatrix(std::size_t classes, std::vector<double> q);

    static TransitionMatrix identity(std::size_t classes);

    std::size_t classes() const noexcept { return classes_; }
    double operator()(std::size_t i, std::size_t j) const { return q_[i * classes_ + j]; }
    std::span<const double> row(std::size_t i) const { return {q_.data() + i * classes_, classes_}; }
    const std::vector<double>& values() const noexcept { return q_; }

private:
    std::size_t classes_ = 0;
    std::vector<double> q_;
};

/// Diagonal 1 - tau, off-diagonal tau / (C - 1).
TransitionMatrix symmetric_matrix(std::size_t classes, double tau);
/// Class i moves to pair_map[i] with probability tau; unmapped rows are identity.
TransitionMatrix asymmetric_matrix(std::size_t classes, double tau,
                                   const std::map<std::size_t, std::size_t>& pair_map);

/// truck -> automobile, bird -> airplane, deer -> horse, cat <-> dog.
const std::map<std::size_t, std::size_t>& cifar10_pair_map();

enum class NoiseKind { none, symmetric, asymmetric };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double tau = 0.0;
    std::map<std::size_t, std::size_t> pair_map;
    std::uint64_t seed = 0;

    TransitionMatrix matrix(std::size_t classes) const;
};

/// Inputs with one label per row.
struct LabeledData {
    Tensor inputs; // [n, dim]
    std::vector<int> labels;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
};

class CleanLabelAccess;

/// Inputs with noisy labels. Clean labels are kept for evaluation only and are
/// reachable solely through CleanLabelAccess.
class NoisyDataset {
public:
    NoisyDataset() = default;
    NoisyDataset(Tensor inputs, std::vector<int> noisy, std::vector<int> clean, std::size_t classes,
                 NoiseSpec spec);

    const Tensor& inputs() const noexcept { return inputs_; }
    std::span<const int> noisy_labels() const noexcept { return noisy_; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t size() const noexcept { return noisy_.size(); }
    std::size_t dim() const noexcept { return inputs_.cols(); }
    const NoiseSpec& noise_spec() const noexcept { return spec_; }

    /// Rows `idx` as a new dataset, clean labels carried along.
    NoisyDataset subset(std::span<const std::size_t> idx) const;

private:
    friend class CleanLabelAccess;

    Tensor inputs_;
    std::vector<int> noisy_;
    std::vector<int> clean_;
    std::size_t classes_ = 0;
    NoiseSpec spec_;
};

/// Evaluation-side view of the quarantined clean labels.
class CleanLabelAccess {
public:
    static std::span<const int> clean_labels(const NoisyDataset& d) noexcept { return d.clean_; }
    /// Fraction of rows whose noisy label differs from the clean one.
    static double noise_rate(const NoisyDataset& d);
    /// Clean inputs/labels, e.g. for a validation split.
    static LabeledData clean_view(const NoisyDataset& d);
};

/// Resamples every label from its row of Q.
NoisyDataset corrupt_labels(const LabeledData& clean, const TransitionMatrix& q, Rng& rng,
                            NoiseSpec spec = {});

struct RegressionDataset {
    std::vector<double> x;
    std::vector<double> y;
    double x_min = 0.0;
    double x_max = 10.0;
    double noise_std = 1.0;
    std::uint64_t seed = 0;
};

/// n evenly spaced points on [x_min, x_max] inclusive, y = x + N(0, noise_std^2).
RegressionDataset gen_toy_regression(std::size_t n, double x_min, double x_max, double noise_std,
                                     std::uint64_t seed);

/// Isotropic unit-variance Gaussian blobs. Class means sit on a circle in the
/// first two coordinates with adjacent means `separation` apart (on a line
/// when dim = 1). Rows are grouped by class.
LabeledData gen_toy_classification(std::size_t classes, std::size_t n_per_class, double separation,
                                   std::size_t dim, Rng& rng);

/// Means used by gen_toy_classification, [classes, dim].
Tensor blob_means(std::size_t classes, double separation, std::size_t dim);

} // namespace nestco::noise
