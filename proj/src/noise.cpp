#include "nestco/noise.hpp"

#include "nestco/errors.hpp"

#include <cmath>
#include <numbers>

namespace nestco::noise {

TransitionMatrix::TransitionMatrix(std::size_t classes, std::vector<double> q)
    : classes_(classes), q_(std::move(q))
{
    if (classes_ < 2)
        throw DomainError("transition matrix needs at least two classes");
    if (q_.size() != classes_ * classes_)
        throw DimensionError("transition matrix must be C x C");
    for (std::size_t i = 0; i < classes_; ++i) {
        double s = 0.0;
        for (double v : row(i)) {
            if (!(v >= 0.0) || !std::isfinite(v))
                throw DomainError("transition matrix entries must be non-negative");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12)
            throw DomainError("transition matrix row " + std::to_string(i) + " does not sum to one");
    }
}

TransitionMatrix TransitionMatrix::identity(std::size_t classes)
{
    std::vector<double> q(classes * classes, 0.0);
    for (std::size_t i = 0; i < classes; ++i)
        q[i * classes + i] = 1.0;
    return {classes, std::move(q)};
}

namespace {

void check_tau(double tau)
{
    if (!(tau >= 0.0 && tau <= 1.0))
        throw DomainError("noise rate tau must lie in [0, 1]");
}

} // namespace

TransitionMatrix symmetric_matrix(std::size_t classes, double tau)
{
    check_tau(tau);
    if (classes < 2)
        throw DomainError("symmetric noise needs at least two classes");
    const double off = tau / static_cast<double>(classes - 1);
    std::vector<double> q(classes * classes, off);
    for (std::size_t i = 0; i < classes; ++i)
        q[i * classes + i] = 1.0 - tau;
    return {classes, std::move(q)};
}

TransitionMatrix asymmetric_matrix(std::size_t classes, double tau,
                                   const std::map<std::size_t, std::size_t>& pair_map)
{
    check_tau(tau);
    std::vector<double> q = TransitionMatrix::identity(classes).values();
    for (auto [from, to] : pair_map) {
        if (from >= classes || to >= classes)
            throw DomainError("pair map refers to a class outside 0.." + std::to_string(classes - 1));
        if (from == to)
            throw DomainError("pair map sends class " + std::to_string(from) + " to itself");
        q[from * classes + from] = 1.0 - tau;
        q[from * classes + to] = tau;
    }
    return {classes, std::move(q)};
}

const std::map<std::size_t, std::size_t>& cifar10_pair_map()
{
    static const std::map<std::size_t, std::size_t> m{{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
    return m;
}

std::string to_string(NoiseKind k)
{
    switch (k) {
    case NoiseKind::none:
        return "none";
    case NoiseKind::symmetric:
        return "symmetric";
    case NoiseKind::asymmetric:
        return "asymmetric";
    }
    return "none";
}

NoiseKind noise_kind_from_string(const std::string& s)
{
    if (s == "none")
        return NoiseKind::none;
    if (s == "symmetric")
        return NoiseKind::symmetric;
    if (s == "asymmetric")
        return NoiseKind::asymmetric;
    throw DomainError("unknown noise kind '" + s + "'");
}

TransitionMatrix NoiseSpec::matrix(std::size_t classes) const
{
    switch (kind) {
    case NoiseKind::none:
        return TransitionMatrix::identity(classes);
    case NoiseKind::symmetric:
        return symmetric_matrix(classes, tau);
    case NoiseKind::asymmetric:
        return asymmetric_matrix(classes, tau, pair_map);
    }
    return TransitionMatrix::identity(classes);
}

// ---------------------------------------------------------------------------

NoisyDataset::NoisyDataset(Tensor inputs, std::vector<int> noisy, std::vector<int> clean,
                           std::size_t classes, NoiseSpec spec)
    : inputs_(std::move(inputs)), noisy_(std::move(noisy)), clean_(std::move(clean)), classes_(classes),
      spec_(std::move(spec))
{
    if (noisy_.size() != clean_.size() || inputs_.rows() != noisy_.size() || inputs_.rank() != 2)
        throw DimensionError("dataset inputs and label arrays differ in length");
}

NoisyDataset NoisyDataset::subset(std::span<const std::size_t> idx) const
{
    const std::size_t D = dim();
    Tensor x({idx.size(), D});
    std::vector<int> n, c;
    n.reserve(idx.size());
    c.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t i = idx[r];
        if (i >= size())
            throw DimensionError("subset index out of range");
        std::copy_n(inputs_.row(i).begin(), D, x.row(r).begin());
        n.push_back(noisy_[i]);
        c.push_back(clean_[i]);
    }
    return {std::move(x), std::move(n), std::move(c), classes_, spec_};
}

double CleanLabelAccess::noise_rate(const NoisyDataset& d)
{
    if (d.size() == 0)
        return 0.0;
    std::size_t flips = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        flips += d.noisy_[i] != d.clean_[i];
    return static_cast<double>(flips) / static_cast<double>(d.size());
}

LabeledData CleanLabelAccess::clean_view(const NoisyDataset& d)
{
    return {d.inputs_, d.clean_, d.classes_};
}

NoisyDataset corrupt_labels(const LabeledData& clean, const TransitionMatrix& q, Rng& rng, NoiseSpec spec)
{
    const std::size_t C = q.classes();
    if (clean.classes != 0 && clean.classes != C)
        throw DimensionError("transition matrix class count does not match the dataset");
    std::vector<int> noisy(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const int y = clean.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw DomainError("label " + std::to_string(y) + " outside 0.." + std::to_string(C - 1));
        const auto row = q.row(static_cast<std::size_t>(y));
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t pick = C;
        std::size_t last = 0;
        for (std::size_t j = 0; j < C; ++j) {
            if (row[j] <= 0.0)
                continue;
            last = j;
            acc += row[j];
            if (pick == C && u < acc)
                pick = j;
        }
        // Round-off in the cumulative sum falls to the last reachable class.
        noisy[i] = static_cast<int>(pick == C ? last : pick);
    }
    return {clean.inputs, std::move(noisy), clean.labels, C, std::move(spec)};
}

// ---------------------------------------------------------------------------

RegressionDataset gen_toy_regression(std::size_t n, double x_min, double x_max, double noise_std,
                                     std::uint64_t seed)
{
    if (n < 2)
        throw DomainError("toy regression needs at least two points");
    if (!(noise_std >= 0.0))
        throw DomainError("noise_std must be non-negative");
    RegressionDataset d;
    d.x_min = x_min;
    d.x_max = x_max;
    d.noise_std = noise_std;
    d.seed = seed;
    Rng rng(seed);
    const double step = (x_max - x_min) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i + 1 == n ? x_max : x_min + step * static_cast<double>(i);
        d.x.push_back(x);
        d.y.push_back(noise_std > 0.0 ? x + rng.normal(0.0, noise_std) : x);
    }
    return d;
}

Tensor blob_means(std::size_t classes, double separation, std::size_t dim)
{
    if (classes < 2 || dim < 1)
        throw DomainError("blobs need at least two classes and one dimension");
    Tensor mu({classes, dim});
    if (dim == 1) {
        for (std::size_t c = 0; c < classes; ++c)
            mu.at(c, 0) = separation * static_cast<double>(c);
        return mu;
    }
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
    for (std::size_t c = 0; c < classes; ++c) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
        mu.at(c, 0) = radius * std::cos(a);
        mu.at(c, 1) = radius * std::sin(a);
    }
    return mu;
}

LabeledData gen_toy_classification(std::size_t classes, std::size_t n_per_class, double separation,
                                   std::size_t dim, Rng& rng)
{
    const Tensor mu = blob_means(classes, separation, dim);
    LabeledData d;
    d.classes = classes;
    d.inputs = Tensor({classes * n_per_class, dim});
    d.labels.reserve(classes * n_per_class);
    std::size_t r = 0;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < n_per_class; ++i, ++r) {
            for (std::size_t j = 0; j < dim; ++j)
                d.inputs.at(r, j) = mu.at(c, j) + rng.normal();
            d.labels.push_back(static_cast<int>(c));
        }
    return d;
}

} // namespace nestco::noise
