#include "nestco/errors.hpp"
#include "nestco/noise.hpp"
#include "nestco/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace nestco;
using namespace nestco::noise;

namespace {

void check_row_stochastic(const TransitionMatrix& q)
{
    for (std::size_t i = 0; i < q.classes(); ++i) {
        double s = 0.0;
        for (double v : q.row(i)) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

LabeledData uniform_labels(std::size_t classes, std::size_t n, Rng& rng)
{
    LabeledData d;
    d.classes = classes;
    d.inputs = Tensor({n, 1});
    d.labels.resize(n);
    for (int& y : d.labels)
        y = static_cast<int>(rng.below(classes));
    return d;
}

double probe_accuracy(std::size_t classes, double separation, std::uint64_t seed)
{
    Rng rng(seed);
    const auto train_clean = gen_toy_classification(classes, 500, separation, 2, rng);
    const auto test = gen_toy_classification(classes, 2000, separation, 2, rng);
    const auto train = corrupt_labels(train_clean, TransitionMatrix::identity(classes), rng);
    const MlpSpec linear{{2, 2, classes}, {Activation::identity, Activation::identity}};
    auto model = lvm::LatentModel::create(linear, masks::NoMask{}, 1, rng);
    train::StageOneConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.lr.base = 0.05;
    cfg.seed = seed;
    train::train_stage_one(model, train, cfg);
    return train::accuracy(lvm::deterministic_predict(model, test.inputs), test.labels);
}

} // namespace

TEST_CASE("symmetric matrix")
{
    const auto q = symmetric_matrix(10, 0.2);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            CHECK(q(i, j) == doctest::Approx(i == j ? 0.8 : 0.2 / 9).epsilon(1e-15));
    check_row_stochastic(q);
    CHECK(symmetric_matrix(5, 0.0).values() == TransitionMatrix::identity(5).values());
    const auto half = symmetric_matrix(2, 0.5);
    for (double v : half.values())
        CHECK(v == 0.5);
    CHECK_THROWS_AS(symmetric_matrix(4, 1.2), DomainError);
    CHECK_THROWS_AS(symmetric_matrix(4, -0.1), DomainError);
    CHECK_THROWS_AS(symmetric_matrix(1, 0.1), DomainError);
}

TEST_CASE("asymmetric matrix")
{
    const auto q = asymmetric_matrix(4, 0.4, {{0, 1}});
    CHECK(q(0, 0) == 0.6);
    CHECK(q(0, 1) == 0.4);
    CHECK(q(0, 2) == 0.0);
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(q(i, j) == (i == j ? 1.0 : 0.0));
    CHECK(asymmetric_matrix(4, 0.0, {{0, 1}}).values() == TransitionMatrix::identity(4).values());
    CHECK_THROWS_AS(asymmetric_matrix(4, 0.3, {{2, 2}}), DomainError);
    CHECK_THROWS_AS(asymmetric_matrix(4, 0.3, {{0, 7}}), DomainError);

    const auto& cifar = cifar10_pair_map();
    CHECK(cifar.at(3) == 5);
    CHECK(cifar.at(5) == 3);
    CHECK(cifar.at(9) == 1);
    CHECK(cifar.at(2) == 0);
    CHECK(cifar.at(4) == 7);
    const auto c = asymmetric_matrix(10, 0.3, cifar);
    check_row_stochastic(c);
    for (std::size_t i = 0; i < 10; ++i) {
        std::size_t nonzero = 0;
        for (double v : c.row(i))
            nonzero += v > 0.0;
        CHECK(nonzero == (cifar.count(i) ? 2u : 1u));
    }
}

TEST_CASE("transition matrix validation")
{
    CHECK_THROWS_AS(TransitionMatrix(2, {0.5, 0.5, 0.7, 0.2}), DomainError);
    CHECK_THROWS_AS(TransitionMatrix(2, {1.5, -0.5, 0.0, 1.0}), DomainError);
    CHECK_THROWS_AS(TransitionMatrix(2, {1.0, 0.0, 0.0}), DimensionError);
}

TEST_CASE("identity corruption keeps labels")
{
    Rng rng(1);
    const auto clean = uniform_labels(5, 1000, rng);
    const auto noisy = corrupt_labels(clean, TransitionMatrix::identity(5), rng);
    CHECK(std::vector<int>(noisy.noisy_labels().begin(), noisy.noisy_labels().end()) == clean.labels);
    CHECK(CleanLabelAccess::noise_rate(noisy) == 0.0);
}

TEST_CASE("symmetric flip rate")
{
    Rng rng(2);
    const auto clean = uniform_labels(10, 100000, rng);
    const auto noisy = corrupt_labels(clean, symmetric_matrix(10, 0.2), rng);
    const double rate = CleanLabelAccess::noise_rate(noisy);
    CHECK(rate >= 0.19);
    CHECK(rate <= 0.21);
}

TEST_CASE("class-conditional flips pass a pooled chi-square test")
{
    Rng rng(3);
    const std::size_t C = 10;
    const auto clean = uniform_labels(C, 100000, rng);
    const auto q = symmetric_matrix(C, 0.3);
    const auto noisy = corrupt_labels(clean, q, rng);
    std::vector<double> counts(C * C, 0.0), totals(C, 0.0);
    for (std::size_t r = 0; r < noisy.size(); ++r) {
        counts[clean.labels[r] * C + noisy.noisy_labels()[r]] += 1.0;
        totals[clean.labels[r]] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            const double e = totals[i] * q(i, j);
            chi2 += (counts[i * C + j] - e) * (counts[i * C + j] - e) / e;
        }
    // 99th percentile of chi-square with 90 degrees of freedom.
    CHECK(chi2 < 124.116);
}

TEST_CASE("asymmetric corruption touches only mapped classes")
{
    Rng rng(4);
    const auto clean = uniform_labels(10, 50000, rng);
    const auto& map = cifar10_pair_map();
    const auto noisy = corrupt_labels(clean, asymmetric_matrix(10, 0.4, map), rng);
    std::size_t mapped = 0, flipped = 0;
    for (std::size_t r = 0; r < noisy.size(); ++r) {
        const auto c = static_cast<std::size_t>(clean.labels[r]);
        const int n = noisy.noisy_labels()[r];
        if (!map.count(c)) {
            REQUIRE(n == clean.labels[r]);
            continue;
        }
        REQUIRE((n == clean.labels[r] || n == static_cast<int>(map.at(c))));
        ++mapped;
        flipped += n != clean.labels[r];
    }
    CHECK(static_cast<double>(flipped) / mapped == doctest::Approx(0.4).epsilon(0.03));

    const auto all = corrupt_labels(clean, asymmetric_matrix(10, 1.0, {{0, 1}}), rng);
    for (std::size_t r = 0; r < all.size(); ++r)
        if (clean.labels[r] == 0)
            REQUIRE(all.noisy_labels()[r] == 1);
}

TEST_CASE("corruption is reproducible and validates labels")
{
    Rng a(5), b(5);
    Rng data(6);
    const auto clean = uniform_labels(4, 500, data);
    const auto q = symmetric_matrix(4, 0.5);
    const auto na = corrupt_labels(clean, q, a);
    const auto nb = corrupt_labels(clean, q, b);
    CHECK(std::equal(na.noisy_labels().begin(), na.noisy_labels().end(), nb.noisy_labels().begin()));

    auto bad = clean;
    bad.labels[3] = 4;
    CHECK_THROWS_AS(corrupt_labels(bad, q, a), DomainError);
    bad.labels[3] = -1;
    CHECK_THROWS_AS(corrupt_labels(bad, q, a), DomainError);
}

TEST_CASE("toy regression data")
{
    const auto d = gen_toy_regression(64, 0.0, 10.0, 0.0, 1);
    REQUIRE(d.x.size() == 64);
    CHECK(d.x.front() == 0.0);
    CHECK(d.x.back() == 10.0);
    CHECK(d.y == d.x);
    for (std::size_t i = 1; i < 64; ++i)
        CHECK(d.x[i] - d.x[i - 1] == doctest::Approx(10.0 / 63));

    const std::size_t n = 100000;
    const auto big = gen_toy_regression(n, 0.0, 10.0, 1.0, 2);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        mean += big.y[i] - big.x[i];
    mean /= n;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(gen_toy_regression(64, 0.0, 10.0, 1.0, 2).y == gen_toy_regression(64, 0.0, 10.0, 1.0, 2).y);
    CHECK_THROWS_AS(gen_toy_regression(1, 0.0, 10.0, 1.0, 2), DomainError);
}

TEST_CASE("toy classification blobs")
{
    Rng rng(7);
    const auto d = gen_toy_classification(4, 30, 3.0, 5, rng);
    CHECK(d.size() == 120);
    CHECK(d.inputs.cols() == 5);
    std::vector<int> counts(4, 0);
    for (int y : d.labels)
        ++counts[static_cast<std::size_t>(y)];
    CHECK(counts == std::vector<int>(4, 30));

    const auto means = blob_means(4, 3.0, 2);
    for (std::size_t c = 0; c < 4; ++c) {
        const std::size_t n = (c + 1) % 4;
        const double dx = means.at(c, 0) - means.at(n, 0), dy = means.at(c, 1) - means.at(n, 1);
        CHECK(std::hypot(dx, dy) == doctest::Approx(3.0));
    }
}

TEST_CASE("well separated blobs are linearly separable")
{
    CHECK(probe_accuracy(2, 10.0, 8) > 0.99);
}

TEST_CASE("coincident blobs give chance accuracy")
{
    CHECK(std::abs(probe_accuracy(4, 0.0, 9) - 0.25) <= 0.05);
}
