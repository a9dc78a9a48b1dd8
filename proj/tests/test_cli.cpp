#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path root = fs::temp_directory_path() / "nestco_test_cli";

int run(const std::string& args)
{
    fs::create_directories(root);
    const std::string cmd = std::string(NESTCO_CLI_PATH) + " " + args + " > " + (root / "last.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const nlohmann::json& j)
{
    fs::create_directories(root);
    const fs::path p = root / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

std::string out_dir(const std::string& name)
{
    const fs::path d = root / name;
    fs::remove_all(d);
    return d.string();
}

const nlohmann::json small_data = {{"train_per_class", 40}, {"val_per_class", 20}, {"test_per_class", 40}};

const nlohmann::json small_train = {
    {"data", small_data},
    {"stage_one", {{"epochs", 2}, {"lr", {{"warmup_iterations", 5}, {"decay", "none"}}}}},
    {"stage_two", {{"epochs", 1}}}};

} // namespace

TEST_CASE("usage and config errors exit with 2")
{
    CHECK(run("") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run("gen-data --bogus-flag") == 2);
    CHECK(run("gen-data --set nonsense=1 --out " + out_dir("bad_key")) == 2);
    CHECK(run("gen-data --set data.tau=0.4 --out " + out_dir("bad_nested_key")) == 2);
    CHECK(run("gen-data --config " + (root / "missing.json").string()) == 2);

    const auto both = write_config("both.json", {{"model", {{"p_drop", 0.3}, {"sigma_nest", 4.0}}}});
    CHECK(run("train --config " + both.string() + " --out " + out_dir("both")) == 2);
    CHECK(run("train --set data.noise.tau=1.5 --out " + out_dir("tau")) == 2);
}

TEST_CASE("missing checkpoints exit with 3")
{
    CHECK(run("coteach --out " + out_dir("empty")) == 3);
    CHECK(run("select-kstar --set checkpoint=" + (root / "nope.bin").string() + " --out " + out_dir("k")) == 3);
}

TEST_CASE("gen-data is byte-reproducible and seed sensitive")
{
    const auto a = out_dir("gen_a"), b = out_dir("gen_b"), c = out_dir("gen_c");
    REQUIRE(run("gen-data --seed 5 --out " + a) == 0);
    REQUIRE(run("gen-data --seed 5 --out " + b) == 0);
    REQUIRE(run("gen-data --seed 6 --out " + c) == 0);
    for (const char* f : {"train.csv", "validation.csv", "test.csv", "summary.json", "dataset.bin"}) {
        CHECK_MESSAGE(slurp(fs::path(a) / f) == slurp(fs::path(b) / f), f);
        CHECK(!slurp(fs::path(a) / f).empty());
    }
    CHECK(slurp(fs::path(a) / "train.csv") != slurp(fs::path(c) / "train.csv"));
}

TEST_CASE("train, coteach and select-kstar chain through checkpoints")
{
    const auto cfg = write_config("small.json", small_train);
    const auto dir = out_dir("chain");
    REQUIRE(run("train --config " + cfg.string() + " --seed 3 --out " + dir) == 0);
    CHECK(fs::exists(fs::path(dir) / "model1.bin"));
    CHECK(fs::exists(fs::path(dir) / "model2.bin"));
    const auto report = slurp(fs::path(dir) / "stage_one.csv");
    CHECK(report.rfind("model,epoch,lr,train_loss,clean_test_accuracy,noisy_train_accuracy,kstar,"
                       "selected_clean_fraction\n",
                       0) == 0);

    REQUIRE(run("coteach --config " + cfg.string() + " --out " + dir) == 0);
    CHECK(fs::exists(fs::path(dir) / "coteach_model1.bin"));
    const auto summary = nlohmann::json::parse(slurp(fs::path(dir) / "coteach_summary.json"));
    CHECK(summary.contains("ensemble_accuracy"));

    REQUIRE(run("select-kstar --set checkpoint=" + (fs::path(dir) / "model1.bin").string() + " --out " + dir) == 0);
    const auto k = nlohmann::json::parse(slurp(fs::path(dir) / "kstar.json"));
    CHECK(k.at("kstar").get<int>() >= 1);

    const auto again = out_dir("chain_again");
    REQUIRE(run("train --config " + cfg.string() + " --seed 3 --out " + again) == 0);
    REQUIRE(run("coteach --config " + cfg.string() + " --out " + again) == 0);
    CHECK(slurp(fs::path(dir) / "stage_one.csv") == slurp(fs::path(again) / "stage_one.csv"));
    CHECK(slurp(fs::path(dir) / "coteach.csv") == slurp(fs::path(again) / "coteach.csv"));
    CHECK(slurp(fs::path(dir) / "model1.bin") == slurp(fs::path(again) / "model1.bin"));
}

TEST_CASE("noiseless toy regression recovers the line")
{
    const auto cfg = write_config("toy0.json", {{"noise_std", 0.0},
                                                {"epochs", 4000},
                                                {"sigma_nest", 8.0},
                                                {"ks", {1, 10}},
                                                {"with_dropout", false}});
    const auto a = out_dir("toy0_a"), b = out_dir("toy0_b");
    REQUIRE(run("toy-regression --config " + cfg.string() + " --out " + a) == 0);
    REQUIRE(run("toy-regression --config " + cfg.string() + " --out " + b) == 0);
    std::istringstream mse(slurp(fs::path(a) / "mse.csv"));
    std::string line;
    std::getline(mse, line);
    CHECK(line == "variant,family,parameter,mse_clean,mse_noisy,final_loss");
    int rows = 0;
    while (std::getline(mse, line)) {
        ++rows;
        const auto name = line.substr(0, line.find(','));
        std::size_t pos = 0;
        for (int f = 0; f < 3; ++f)
            pos = line.find(',', pos) + 1;
        CHECK_MESSAGE(std::stod(line.substr(pos)) < 1e-3, name);
    }
    CHECK(rows == 3);
    for (const char* f : {"predictions.csv", "train_points.csv", "mse.csv"})
        CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
}

TEST_CASE("verify-theory writes its tables and signals failed checks")
{
    const auto dir = out_dir("theory");
    const int rc = run("verify-theory --set instances=10 --set dirac_instances=5 --set ones_instances=5 --out " + dir);
    CHECK((rc == 0 || rc == 4));
    const auto j = nlohmann::json::parse(slurp(fs::path(dir) / "theory.json"));
    CHECK(j.at("identity").at("passed") == j.at("identity").at("instances"));
    CHECK(j.at("dirac").at("passed") == 5);
    CHECK(j.at("ones").at("passed") == 5);
    const auto& co = j.at("coteaching");
    CHECK((rc == 4) == (co.at("passed") != co.at("instances")));
    CHECK(fs::exists(fs::path(dir) / "identity.csv"));
    CHECK(fs::exists(fs::path(dir) / "coteaching.csv"));
}
