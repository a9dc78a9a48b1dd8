#include "nestco/config.hpp"
#include "nestco/errors.hpp"
#include "nestco/io.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace nestco;
using namespace nestco::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "nestco_test_io";
    fs::create_directories(dir);
    return dir / name;
}

noise::NoisyDataset sample_dataset()
{
    Rng rng(1);
    const auto clean = noise::gen_toy_classification(3, 10, 2.0, 3, rng);
    noise::NoiseSpec spec{noise::NoiseKind::asymmetric, 0.3, {{0, 1}, {2, 0}}, 7};
    return noise::corrupt_labels(clean, spec.matrix(3), rng, spec);
}

} // namespace

TEST_CASE("model round trip is exact")
{
    for (const masks::MaskDistribution& mask :
         {masks::MaskDistribution(masks::NestedSpec{2.5, 6}), masks::MaskDistribution(masks::DropoutSpec{0.3, 6}),
          masks::MaskDistribution(masks::NoMask{})}) {
        Rng rng(2);
        auto m = lvm::LatentModel::create(MlpSpec::relu_chain({3, 6, 4}), mask, 1, rng);
        m.params.mutable_bias(0)[0] = 0.1 + 1e-17;
        m.params.mutable_weight(1)[2] = -std::numeric_limits<double>::denorm_min();
        const auto path = scratch("model.bin");
        save_model(path, m, 99, {{"role", "stage_one"}});
        const auto f = load_model(path);
        CHECK(f.model.params == m.params);
        CHECK(f.model.spec.widths == m.spec.widths);
        CHECK(f.model.mask_layer == 1);
        CHECK(f.model.mask.index() == m.mask.index());
        CHECK(f.seed == 99);
        CHECK(f.meta.at("role") == "stage_one");
    }
}

TEST_CASE("dataset round trip keeps both label arrays")
{
    const auto d = sample_dataset();
    const auto path = scratch("data.bin");
    save_dataset(path, d, 5);
    const auto back = load_dataset(path);
    CHECK(back.inputs() == d.inputs());
    CHECK(std::equal(back.noisy_labels().begin(), back.noisy_labels().end(), d.noisy_labels().begin()));
    const auto a = noise::CleanLabelAccess::clean_labels(back), b = noise::CleanLabelAccess::clean_labels(d);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
    CHECK(back.classes() == 3);
    CHECK(back.noise_spec().kind == noise::NoiseKind::asymmetric);
    CHECK(back.noise_spec().tau == 0.3);
    CHECK(back.noise_spec().pair_map == d.noise_spec().pair_map);

    export_dataset_csv(scratch("data.csv"), d);
    std::ifstream csv(scratch("data.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "x0,x1,x2,noisy,clean");
}

TEST_CASE("bad files raise IoError")
{
    CHECK_THROWS_AS(load_model(scratch("does_not_exist.bin")), IoError);

    const auto path = scratch("garbage.bin");
    {
        std::ofstream f(path, std::ios::binary);
        f << "not a model at all";
    }
    CHECK_THROWS_AS(load_model(path), IoError);
    CHECK_THROWS_AS(load_dataset(path), IoError);

    Rng rng(3);
    const auto m = lvm::LatentModel::create(MlpSpec::relu_chain({2, 4, 3}), masks::NestedSpec{1.0, 4}, 1, rng);
    const auto full = scratch("truncated.bin");
    save_model(full, m, 1);
    fs::resize_file(full, fs::file_size(full) - 8);
    CHECK_THROWS_AS(load_model(full), IoError);

    const auto ds = scratch("as_dataset.bin");
    save_dataset(ds, sample_dataset(), 1);
    CHECK_THROWS_AS(load_model(ds), IoError);
}

TEST_CASE("mask and spec JSON")
{
    for (const masks::MaskDistribution& mask :
         {masks::MaskDistribution(masks::NestedSpec{200.0, 128}), masks::MaskDistribution(masks::DropoutSpec{0.5, 3}),
          masks::MaskDistribution(masks::NoMask{4})}) {
        const auto back = mask_from_json(mask_to_json(mask));
        CHECK(mask_to_json(back) == mask_to_json(mask));
    }
    const auto spec = MlpSpec::relu_chain({1, 64, 128, 1});
    CHECK(spec_from_json(spec_to_json(spec)).widths == spec.widths);
    CHECK(spec_from_json(spec_to_json(spec)).activations == spec.activations);
    CHECK_THROWS(mask_from_json(nlohmann::json{{"kind", "gaussian"}}));
}

TEST_CASE("noise spec JSON")
{
    noise::NoiseSpec s{noise::NoiseKind::symmetric, 0.4, {}, 3};
    const auto back = noise_spec_from_json(noise_spec_to_json(s));
    CHECK(back.kind == s.kind);
    CHECK(back.tau == s.tau);
    CHECK(back.seed == s.seed);
}

TEST_CASE("format_double round-trips")
{
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e21, 0.0, 123456789.125})
        CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("config overrides and strict keys")
{
    nlohmann::json doc = nlohmann::json::object();
    config::apply_override(doc, "stage_one.lr.base=0.2");
    config::apply_override(doc, "noise.kind=symmetric");
    config::apply_override(doc, "flag=true");
    CHECK(doc["stage_one"]["lr"]["base"] == 0.2);
    CHECK(doc["noise"]["kind"] == "symmetric");
    CHECK(doc["flag"] == true);
    CHECK_THROWS_AS(config::apply_override(doc, "novalue"), config::ConfigError);
    CHECK_THROWS_AS(config::allow_keys(doc, {"stage_one", "noise"}), config::ConfigError);
    CHECK_NOTHROW(config::allow_keys(doc, {"stage_one", "noise", "flag"}));
    CHECK(config::load("").empty());
    CHECK_THROWS_AS(config::load(scratch("missing.json")), config::ConfigError);
}
