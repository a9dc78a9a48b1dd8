#include "nestco/errors.hpp"
#include "nestco/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace nestco;
using namespace nestco::train;

namespace {

struct Blobs {
    noise::NoisyDataset train;
    noise::LabeledData test;
};

Blobs blobs(double tau, double separation, std::uint64_t seed, std::size_t per_class = 200)
{
    Rng rng(seed);
    const auto clean = noise::gen_toy_classification(4, per_class, separation, 4, rng);
    Blobs b;
    b.train = noise::corrupt_labels(clean, noise::symmetric_matrix(4, tau), rng);
    b.test = noise::gen_toy_classification(4, 250, separation, 4, rng);
    return b;
}

lvm::LatentModel blob_model(masks::MaskDistribution mask, std::uint64_t seed)
{
    Rng rng(seed);
    return lvm::LatentModel::create(MlpSpec::relu_chain({4, 16, 8, 4}), std::move(mask), 2, rng);
}

StageOneConfig stage_one(std::size_t epochs, std::uint64_t seed)
{
    StageOneConfig c;
    c.epochs = epochs;
    c.batch_size = 32;
    c.lr.base = 0.05;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("select_small_loss examples")
{
    CHECK(select_small_loss(std::vector<double>{0.1, 0.9, 0.2, 0.5}, 0.5) == std::vector<std::size_t>{0, 2});
    CHECK(select_small_loss(std::vector<double>{0.1, 0.9, 0.2}, 0.0) == std::vector<std::size_t>{0, 1, 2});
    CHECK(select_small_loss(std::vector<double>{0.3, 0.3, 0.3, 0.9}, 0.5) == std::vector<std::size_t>{0, 1});
    CHECK(select_small_loss(std::vector<double>{0.4, 0.1, 0.3}, 0.5) == std::vector<std::size_t>{1, 2});
    CHECK_THROWS_AS(select_small_loss(std::vector<double>{}, 0.2), UsageError);
    CHECK_THROWS_AS(select_small_loss(std::vector<double>{0.1, NAN}, 0.2), NumericError);
}

TEST_CASE("select_small_loss size and separation")
{
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + rng.below(50);
        std::vector<double> l(n);
        for (double& v : l)
            v = std::floor(rng.uniform() * 10.0);
        const double lambda = 0.95 * rng.uniform();
        const auto sel = select_small_loss(l, lambda);
        REQUIRE(sel.size() == static_cast<std::size_t>(std::ceil((1.0 - lambda) * n)));
        CHECK(std::is_sorted(sel.begin(), sel.end()));
        std::vector<bool> in(n, false);
        double max_sel = -1.0;
        for (std::size_t i : sel) {
            in[i] = true;
            max_sel = std::max(max_sel, l[i]);
        }
        for (std::size_t i = 0; i < n; ++i)
            if (!in[i])
                CHECK(l[i] >= max_sel);
    }
}

TEST_CASE("zero epochs leave models unchanged")
{
    const auto data = blobs(0.2, 3.0, 2);
    auto m = blob_model(masks::NestedSpec{3.0, 8}, 3);
    const auto before = m.params;
    const auto report = train_stage_one(m, data.train, stage_one(0, 4));
    CHECK(m.params == before);
    CHECK(report.epochs.empty());

    auto m2 = blob_model(masks::NestedSpec{3.0, 8}, 5);
    const auto before2 = m2.params;
    CoTeachConfig cc;
    cc.epochs = 0;
    coteach_finetune(m, m2, data.train, cc);
    CHECK(m.params == before);
    CHECK(m2.params == before2);
}

TEST_CASE("clean separable blobs are learned")
{
    const auto data = blobs(0.0, 6.0, 6);
    for (const masks::MaskDistribution& mask :
         {masks::MaskDistribution(masks::NoMask{}), masks::MaskDistribution(masks::NestedSpec{3.0, 8}),
          masks::MaskDistribution(masks::DropoutSpec{0.3, 8})}) {
        auto m = blob_model(mask, 7);
        const Evaluator eval(data.test, std::nullopt);
        const auto report = train_stage_one(m, data.train, stage_one(15, 8), &eval);
        REQUIRE(report.epochs.size() == 15);
        CHECK(report.last().clean_test_accuracy > 0.95);
        CHECK(report.last().train_loss < report.epochs.front().train_loss);
        CHECK(std::isnan(report.last().selected_clean_fraction));
    }
}

TEST_CASE("stage one is bit-reproducible")
{
    const auto data = blobs(0.4, 3.0, 9);
    auto run = [&] {
        auto m1 = blob_model(masks::NestedSpec{3.0, 8}, 10);
        auto m2 = blob_model(masks::NestedSpec{3.0, 8}, 11);
        train_stage_one_pair(m1, m2, data.train, stage_one(3, 12), stage_one(3, 13));
        return std::make_pair(m1.params, m2.params);
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);

    auto s1 = blob_model(masks::NestedSpec{3.0, 8}, 10);
    auto s2 = blob_model(masks::NestedSpec{3.0, 8}, 11);
    train_stage_one_pair(s1, s2, data.train, stage_one(3, 12), stage_one(3, 13), nullptr, false);
    CHECK(s1.params == a.first);
    CHECK(s2.params == a.second);
}

TEST_CASE("divergent training aborts")
{
    const auto data = blobs(0.0, 3.0, 14);
    auto m = blob_model(masks::NoMask{}, 15);
    auto cfg = stage_one(5, 16);
    cfg.lr.base = 1e6;
    CHECK_THROWS_AS(train_stage_one(m, data.train, cfg), NumericError);
}

TEST_CASE("co-teaching selects mostly clean examples after pre-training")
{
    const auto data = blobs(0.4, 6.0, 17, 250);
    auto m1 = blob_model(masks::NestedSpec{3.0, 8}, 18);
    auto m2 = blob_model(masks::NestedSpec{3.0, 8}, 19);
    train_stage_one_pair(m1, m2, data.train, stage_one(4, 20), stage_one(4, 21));

    CoTeachConfig cc;
    cc.lambda_forget = 0.4;
    cc.epochs = 1;
    cc.batch_size = 50;
    cc.lr.base = 0.005;
    cc.seed = 22;
    const Evaluator eval(data.test, std::nullopt);
    const auto report = coteach_finetune(m1, m2, data.train, cc, &eval);
    REQUIRE(report.epochs.size() == 1);
    CHECK(report.last().selected_clean_fraction > 1.0 - 0.4);
    CHECK(report.last().selected_clean_fraction > 0.9);
}

TEST_CASE("lambda zero selects every example of the split halves")
{
    const auto data = blobs(0.3, 3.0, 23, 100);
    auto m1 = blob_model(masks::NoMask{}, 24);
    auto m2 = blob_model(masks::NoMask{}, 25);
    CoTeachConfig cc;
    cc.lambda_forget = 0.0;
    cc.batch_size = 40;
    cc.lr.base = 0.01;
    const Evaluator eval(data.test, std::nullopt);
    const auto report = coteach_finetune(m1, m2, data.train, cc, &eval);
    CHECK(report.last().selected_clean_fraction ==
          doctest::Approx(1.0 - noise::CleanLabelAccess::noise_rate(data.train)).epsilon(1e-12));
}

TEST_CASE("co-teaching rejects mismatched or shared models")
{
    const auto data = blobs(0.2, 3.0, 26, 20);
    auto m1 = blob_model(masks::NestedSpec{3.0, 8}, 27);
    auto m2 = blob_model(masks::DropoutSpec{0.3, 8}, 28);
    CoTeachConfig cc;
    CHECK_THROWS_AS(coteach_finetune(m1, m2, data.train, cc), UsageError);
    CHECK_THROWS_AS(coteach_finetune(m1, m1, data.train, cc), UsageError);
    cc.lambda_forget = 1.0;
    CHECK_THROWS_AS(cc.validate(), DomainError);
}

TEST_CASE("ensemble averages probabilities")
{
    Rng rng(29);
    Tensor x({6, 4});
    for (double& v : x.values())
        v = rng.normal();
    const auto m1 = blob_model(masks::NestedSpec{3.0, 8}, 30);
    const auto m2 = blob_model(masks::NestedSpec{3.0, 8}, 31);
    const lvm::PredictMode mode = lvm::Truncate{8};
    const auto single = lvm::predict(m1, x, mode);
    const auto same = ensemble_predict(m1, m1, x, mode);
    for (std::size_t i = 0; i < single.size(); ++i)
        CHECK(same[i] == doctest::Approx(single[i]).epsilon(1e-15));

    const auto a = lvm::predict(m1, x, lvm::Truncate{3});
    const auto b = lvm::predict(m2, x, lvm::Truncate{5});
    const auto e = ensemble_predict(m1, m2, x, lvm::Truncate{3}, lvm::Truncate{5});
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(e.at(r, c) == doctest::Approx((a.at(r, c) + b.at(r, c)) / 2.0).epsilon(1e-15));
            s += e.at(r, c);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }

    CHECK(accuracy(Tensor::matrix(2, 2, {0.5, 0.5, 0.1, 0.9}), std::vector<int>{0, 1}) == 1.0);
    const auto half = Tensor::matrix(1, 2, {1.0, 0.0});
    const auto other = Tensor::matrix(1, 2, {0.0, 1.0});
    CHECK(accuracy(half, std::vector<int>{0}) == 1.0);
    CHECK(accuracy(other, std::vector<int>{0}) == 0.0);
}

TEST_CASE("k* selection")
{
    const auto data = blobs(0.0, 4.0, 32);
    const auto val = noise::CleanLabelAccess::clean_view(data.train);

    auto m = blob_model(masks::NestedSpec{3.0, 8}, 33);
    train_stage_one(m, data.train, stage_one(3, 34));
    const auto acc = truncation_accuracies(m, val);
    REQUIRE(acc.size() == 8);
    std::size_t best = 0;
    for (std::size_t k = 0; k < 8; ++k) {
        const double direct = accuracy(lvm::predict(m, val.inputs, lvm::Truncate{k + 1}), val.labels);
        CHECK(acc[k] == direct);
        if (direct > acc[best])
            best = k;
    }
    CHECK(select_kstar(m, val) == best + 1);

    auto blind = m;
    auto& w = blind.params.mutable_weight(2);
    for (std::size_t o = 0; o < w.rows(); ++o)
        for (std::size_t j = 1; j < w.cols(); ++j)
            w.at(o, j) = 0.0;
    CHECK(select_kstar(blind, val) == 1);

    Rng rng(35);
    const auto one = lvm::LatentModel::create(MlpSpec::relu_chain({4, 1, 4}), masks::NestedSpec{1.0, 1}, 1, rng);
    CHECK(select_kstar(one, val) == 1);

    CHECK_THROWS_AS(select_kstar(blob_model(masks::DropoutSpec{0.2, 8}, 36), val), UsageError);
    CHECK_THROWS_AS(select_kstar(blob_model(masks::NoMask{}, 36), val), UsageError);

    const Evaluator eval(data.test, val);
    CHECK(eval.kstar(m) == select_kstar(m, val));
    CHECK(std::get<lvm::Truncate>(eval.inference_mode(m)).k == eval.kstar(m));
}

TEST_CASE("regression training lowers the loss")
{
    Rng rng(37);
    auto m = lvm::LatentModel::create(MlpSpec::relu_chain({1, 8, 8, 1}), masks::NestedSpec{3.0, 8}, 2, rng,
                                      lvm::Task::regression);
    Tensor x({20, 1});
    std::vector<double> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
        x[i] = static_cast<double>(i) / 10.0 - 1.0;
        y[i] = 2.0 * x[i];
    }
    RegressionConfig cfg;
    cfg.epochs = 300;
    cfg.lr.base = 0.01;
    const auto losses = train_regression(m, x, y, cfg);
    REQUIRE(losses.size() == 300);
    CHECK(losses.back() < 0.25 * losses.front());
}
