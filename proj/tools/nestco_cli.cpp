#include "nestco/config.hpp"
#include "nestco/errors.hpp"
#include "nestco/experiments.hpp"
#include "nestco/io.hpp"
#include "nestco/kernels.hpp"
#include "nestco/toy.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace nestco;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct AssertionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out = "nestco-out";
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--seed", c.seed, "Seed, overrides the config's \"seed\"");
    sub->add_option("--threads", c.threads, "OpenMP threads (default: all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--set", c.sets, "Override a config value, key.path=value (repeatable)");
}

json load_doc(const Common& c)
{
    json doc = config::load(c.config);
    for (const auto& s : c.sets)
        config::apply_override(doc, s);
    if (c.seed)
        doc["seed"] = *c.seed;
    return doc;
}

fs::path prepare_out(const Common& c)
{
    const fs::path out(c.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out))
        throw config::ConfigError("cannot create output directory " + out.string());
    const fs::path probe = out / ".nestco-write-test";
    {
        std::ofstream os(probe);
        if (!os)
            throw config::ConfigError("output directory " + out.string() + " is not writable");
    }
    fs::remove(probe, ec);
    return out;
}

std::uint64_t seed_of(const json& doc)
{
    if (!doc.contains("seed"))
        return 0;
    if (!doc.at("seed").is_number_unsigned())
        throw config::ConfigError("seed must be a non-negative integer");
    return doc.at("seed").get<std::uint64_t>();
}

template <class T>
T section(const json& doc, const char* key, T value)
{
    if (doc.contains(key)) {
        try {
            config::from_json(doc.at(key), value);
        } catch (const config::ConfigError& e) {
            throw config::ConfigError(std::string(key) + ": " + e.what());
        }
    }
    return value;
}

bool flag(const json& doc, const char* key, bool fallback)
{
    if (!doc.contains(key))
        return fallback;
    if (!doc.at(key).is_boolean())
        throw config::ConfigError(std::string(key) + " must be true or false");
    return doc.at(key).get<bool>();
}

std::size_t count(const json& doc, const char* key, std::size_t fallback)
{
    if (!doc.contains(key))
        return fallback;
    if (!doc.at(key).is_number_unsigned())
        throw config::ConfigError(std::string(key) + " must be a non-negative integer");
    return doc.at(key).get<std::size_t>();
}

class Csv {
public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : os_(path), path_(path)
    {
        if (!os_)
            throw io::IoError("cannot write " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i)
            os_ << (i ? "," : "") << header[i];
        os_ << '\n';
    }

    Csv& operator<<(double v)
    {
        sep();
        os_ << (std::isnan(v) ? std::string("nan") : io::format_double(v));
        return *this;
    }
    Csv& operator<<(std::size_t v)
    {
        sep();
        os_ << v;
        return *this;
    }
    Csv& operator<<(int v)
    {
        sep();
        os_ << v;
        return *this;
    }
    Csv& operator<<(bool v)
    {
        sep();
        os_ << (v ? 1 : 0);
        return *this;
    }
    Csv& operator<<(const std::string& v)
    {
        sep();
        os_ << v;
        return *this;
    }
    void end()
    {
        os_ << '\n';
        first_ = true;
    }

private:
    void sep()
    {
        if (!first_)
            os_ << ',';
        first_ = false;
    }

    std::ofstream os_;
    fs::path path_;
    bool first_ = true;
};

void write_json(const fs::path& path, const json& j)
{
    std::ofstream os(path);
    if (!os)
        throw io::IoError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

void write_labeled(const fs::path& path, const noise::LabeledData& d)
{
    std::vector<std::string> header;
    for (std::size_t j = 0; j < d.inputs.cols(); ++j)
        header.push_back("x" + std::to_string(j));
    header.push_back("label");
    Csv csv(path, header);
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.inputs.cols(); ++j)
            csv << d.inputs.at(i, j);
        csv << d.labels[i];
        csv.end();
    }
}

void write_report(Csv& csv, const std::string& model, const train::TrainReport& r)
{
    for (const auto& e : r.epochs) {
        csv << model << e.epoch << e.lr << e.train_loss << e.clean_test_accuracy << e.noisy_train_accuracy
            << e.kstar << e.selected_clean_fraction;
        csv.end();
    }
}

const std::vector<std::string> report_header{"model", "epoch", "lr", "train_loss", "clean_test_accuracy",
                                             "noisy_train_accuracy", "kstar", "selected_clean_fraction"};

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c)
{
    const json doc = load_doc(c);
    config::allow_keys(doc, {"data", "seed"});
    exp::BlobData data = section(doc, "data", exp::default_two_stage().data);
    const auto seed = seed_of(doc);
    const fs::path out = prepare_out(c);

    const auto splits = exp::make_blob_splits(data, seed);
    io::save_dataset(out / "dataset.bin", splits.train, seed);
    io::export_dataset_csv(out / "train.csv", splits.train);
    write_labeled(out / "validation.csv", splits.validation);
    write_labeled(out / "test.csv", splits.test);
    const double rate = noise::CleanLabelAccess::noise_rate(splits.train);
    write_json(out / "summary.json", {{"seed", seed},
                                      {"train_size", splits.train.size()},
                                      {"validation_size", splits.validation.size()},
                                      {"test_size", splits.test.size()},
                                      {"train_noise_rate", rate},
                                      {"data", config::to_json(data)}});
    std::cout << "wrote " << splits.train.size() << " training rows, noise rate " << rate << " to " << out.string()
              << '\n';
    return 0;
}

exp::TwoStageConfig two_stage_from(const json& doc, int threads)
{
    exp::TwoStageConfig cfg = exp::default_two_stage();
    cfg.data = section(doc, "data", cfg.data);
    cfg.model = section(doc, "model", cfg.model);
    cfg.stage_one = section(doc, "stage_one", cfg.stage_one);
    cfg.stage_two = section(doc, "stage_two", cfg.stage_two);
    cfg.seed = seed_of(doc);
    cfg.concurrent = flag(doc, "concurrent", threads != 1 && kernels::max_threads() > 1);
    try {
        cfg.model.require_compression();
    } catch (const std::exception& e) {
        throw config::ConfigError(std::string("model: ") + e.what());
    }
    return cfg;
}

json checkpoint_meta(const exp::TwoStageConfig& cfg, const char* role, std::size_t index)
{
    return {{"role", role},
            {"index", index},
            {"seed", cfg.seed},
            {"data", config::to_json(cfg.data)},
            {"model", config::to_json(cfg.model)}};
}

int cmd_train(const Common& c)
{
    const json doc = load_doc(c);
    config::allow_keys(doc, {"data", "model", "stage_one", "stage_two", "seed", "concurrent"});
    const auto cfg = two_stage_from(doc, c.threads);
    const fs::path out = prepare_out(c);

    const auto r = exp::run_stage_one(cfg);
    Csv csv(out / "stage_one.csv", report_header);
    for (std::size_t i = 0; i < 2; ++i) {
        io::save_model(out / ("model" + std::to_string(i + 1) + ".bin"), r.models[i], cfg.seed,
                       checkpoint_meta(cfg, "stage_one", i + 1));
        write_report(csv, "model" + std::to_string(i + 1), r.reports[i]);
    }
    write_json(out / "summary.json", {{"seed", cfg.seed},
                                      {"train_noise_rate", r.train_noise_rate},
                                      {"accuracy", r.accuracy},
                                      {"ensemble_accuracy", r.ensemble_accuracy},
                                      {"kstar", r.kstar},
                                      {"data", config::to_json(cfg.data)},
                                      {"model", config::to_json(cfg.model)},
                                      {"stage_one", config::to_json(cfg.stage_one)}});
    std::cout << "stage one: clean test accuracy " << r.accuracy[0] << " / " << r.accuracy[1] << ", ensemble "
              << r.ensemble_accuracy << '\n';
    return 0;
}

std::vector<fs::path> checkpoint_paths(const json& doc, const char* key, std::vector<fs::path> fallback)
{
    if (!doc.contains(key))
        return fallback;
    const auto& v = doc.at(key);
    std::vector<fs::path> paths;
    if (v.is_string()) {
        paths.emplace_back(v.get<std::string>());
    } else if (v.is_array()) {
        for (const auto& p : v) {
            if (!p.is_string())
                throw config::ConfigError(std::string(key) + " entries must be paths");
            paths.emplace_back(p.get<std::string>());
        }
    } else {
        throw config::ConfigError(std::string(key) + " must be a path or a list of paths");
    }
    return paths;
}

io::ModelFile load_checkpoint(const fs::path& p)
{
    if (!fs::exists(p))
        throw io::IoError("missing checkpoint " + p.string());
    return io::load_model(p);
}

/// Data and seed recorded in a stage-one checkpoint, unless the document overrides them.
void inherit_data(const json& doc, const io::ModelFile& f, exp::BlobData& data, std::uint64_t& seed)
{
    if (!doc.contains("data") && f.meta.contains("data"))
        config::from_json(f.meta.at("data"), data);
    else
        data = section(doc, "data", data);
    seed = doc.contains("seed") ? seed_of(doc) : f.seed;
}

int cmd_coteach(const Common& c)
{
    const json doc = load_doc(c);
    // The two-stage document used for `train` is accepted as is; its stage-one
    // settings are already baked into the checkpoints.
    config::allow_keys(doc, {"data", "model", "stage_one", "stage_two", "seed", "concurrent", "checkpoints"});
    const fs::path out(c.out);
    const auto paths = checkpoint_paths(doc, "checkpoints", {out / "model1.bin", out / "model2.bin"});
    if (paths.size() != 2)
        throw config::ConfigError("checkpoints must name exactly two stage-one models");
    const auto f1 = load_checkpoint(paths[0]);
    const auto f2 = load_checkpoint(paths[1]);

    exp::TwoStageConfig cfg = exp::default_two_stage();
    inherit_data(doc, f1, cfg.data, cfg.seed);
    cfg.stage_two = section(doc, "stage_two", cfg.stage_two);
    if (f1.model.spec.widths != f2.model.spec.widths)
        throw config::ConfigError("checkpoints have different architectures");
    if (doc.contains("model") && f1.meta.contains("model") &&
        config::to_json(section(doc, "model", exp::default_two_stage().model)) != f1.meta.at("model"))
        throw config::ConfigError("model section does not match the checkpoints");
    prepare_out(c);

    const auto r = exp::run_coteach(cfg, f1.model, f2.model);
    for (std::size_t i = 0; i < 2; ++i) {
        json meta = checkpoint_meta(cfg, "coteach", i + 1);
        meta["model"] = (i == 0 ? f1 : f2).meta.value("model", json::object());
        io::save_model(out / ("coteach_model" + std::to_string(i + 1) + ".bin"), r.models[i], cfg.seed, meta);
    }
    Csv csv(out / "coteach.csv", report_header);
    write_report(csv, "ensemble", r.stage_two);
    write_json(out / "coteach_summary.json",
               {{"seed", cfg.seed},
                {"train_noise_rate", r.train_noise_rate},
                {"stage_one_accuracy", r.stage_one_accuracy},
                {"stage_one_ensemble_accuracy", r.stage_one_ensemble_accuracy},
                {"ensemble_accuracy", r.ensemble_accuracy},
                {"selected_clean_fraction", finite_or_null(r.selected_clean_fraction)},
                {"stage_two", config::to_json(cfg.stage_two)}});
    std::cout << "co-teaching: ensemble clean test accuracy " << r.ensemble_accuracy << " (stage one "
              << r.stage_one_ensemble_accuracy << "), selected clean fraction " << r.selected_clean_fraction << '\n';
    return 0;
}

int cmd_select_kstar(const Common& c)
{
    const json doc = load_doc(c);
    config::allow_keys(doc, {"data", "seed", "checkpoint"});
    const fs::path out(c.out);
    const auto paths = checkpoint_paths(doc, "checkpoint", {out / "model1.bin"});
    if (paths.size() != 1)
        throw config::ConfigError("checkpoint must name one model");
    const auto f = load_checkpoint(paths[0]);
    if (!masks::is_nested(f.model.mask))
        throw config::ConfigError("k* selection needs a Nested Dropout model");

    exp::BlobData data = exp::default_two_stage().data;
    std::uint64_t seed = 0;
    inherit_data(doc, f, data, seed);
    prepare_out(c);
    const auto splits = exp::make_blob_splits(data, seed);
    const auto acc = train::truncation_accuracies(f.model, splits.validation);
    const auto kstar = train::select_kstar(f.model, splits.validation);
    Csv csv(out / "kstar.csv", {"k", "validation_accuracy"});
    for (std::size_t k = 1; k <= acc.size(); ++k) {
        csv << k << acc[k - 1];
        csv.end();
    }
    write_json(out / "kstar.json", {{"kstar", kstar}, {"validation_accuracy", acc[kstar - 1]}});
    std::cout << "k* = " << kstar << " (validation accuracy " << acc[kstar - 1] << ")\n";
    return 0;
}

exp::ChannelInfoConfig channel_info_from(const json& doc)
{
    exp::ChannelInfoConfig cfg = exp::default_channel_info();
    cfg.data = section(doc, "data", cfg.data);
    cfg.model = section(doc, "model", cfg.model);
    cfg.training = section(doc, "training", cfg.training);
    cfg.probe = section(doc, "probe", cfg.probe);
    cfg.seed = seed_of(doc);
    if (!(cfg.model.sigma_nest > 0.0) || cfg.model.p_drop > 0.0)
        throw config::ConfigError("model: channel-info needs sigma_nest > 0 and p_drop = 0");
    return cfg;
}

json sorting_json(const exp::ChannelInfoResult& r)
{
    auto one = [](const analysis::SortingStats& s, double acc) {
        return json{{"spearman", s.spearman}, {"violations", s.violations}, {"pairs", s.pairs}, {"test_accuracy", acc}};
    };
    return {{"nested", one(r.nested_stats, r.nested_accuracy)},
            {"baseline", one(r.baseline_stats, r.baseline_accuracy)},
            {"marginal_entropy", r.nested.marginal_entropy}};
}

void write_channel_csv(const fs::path& path, const exp::ChannelInfoResult& r)
{
    Csv csv(path, {"channel", "nested_info", "nested_entropy", "baseline_info", "baseline_entropy"});
    for (std::size_t k = 0; k < r.nested.info.size(); ++k) {
        csv << (k + 1) << r.nested.info[k] << r.nested.entropy[k] << r.baseline.info[k] << r.baseline.entropy[k];
        csv.end();
    }
}

int cmd_channel_info(const Common& c)
{
    const json doc = load_doc(c);
    config::allow_keys(doc, {"data", "model", "training", "probe", "seed"});
    const auto cfg = channel_info_from(doc);
    const fs::path out = prepare_out(c);
    const auto r = exp::run_channel_info(cfg);
    write_channel_csv(out / "channel_info.csv", r);
    json s = sorting_json(r);
    s["seed"] = cfg.seed;
    write_json(out / "channel_info.json", s);
    std::cout << "spearman(channel, info): nested " << r.nested_stats.spearman << ", baseline "
              << r.baseline_stats.spearman << '\n';
    return 0;
}

int cmd_verify_theory(const Common& c)
{
    const json doc = load_doc(c);
    config::allow_keys(doc, {"instances", "dirac_instances", "ones_instances", "residual_tolerance", "seed",
                             "sorting"});
    exp::TheoryConfig cfg;
    cfg.instances = count(doc, "instances", cfg.instances);
    cfg.dirac_instances = count(doc, "dirac_instances", cfg.dirac_instances);
    cfg.ones_instances = count(doc, "ones_instances", cfg.ones_instances);
    if (doc.contains("residual_tolerance")) {
        if (!doc.at("residual_tolerance").is_number() || !(doc.at("residual_tolerance").get<double>() > 0.0))
            throw config::ConfigError("residual_tolerance must be a positive number");
        cfg.residual_tolerance = doc.at("residual_tolerance").get<double>();
    }
    cfg.seed = seed_of(doc);
    std::optional<exp::ChannelInfoConfig> sorting;
    if (doc.contains("sorting")) {
        const auto& s = doc.at("sorting");
        if (s.is_boolean()) {
            if (s.get<bool>())
                sorting = channel_info_from(json{{"seed", cfg.seed}});
        } else {
            json sub = s;
            if (!sub.contains("seed"))
                sub["seed"] = cfg.seed;
            config::allow_keys(sub, {"data", "model", "training", "probe", "seed"});
            sorting = channel_info_from(sub);
        }
    }
    const fs::path out = prepare_out(c);

    const auto r = exp::run_theory_suite(cfg);
    {
        Csv csv(out / "identity.csv",
                {"suite", "id", "lhs", "bias", "variance", "const", "residual", "max_report_gap", "pass"});
        for (const auto& row : r.identity) {
            csv << row.suite << row.id << row.lhs << row.bias << row.variance << row.const_term << row.residual
                << row.max_report_gap << row.pass;
            csv.end();
        }
    }
    {
        Csv csv(out / "coteaching.csv",
                {"id", "residual", "bias", "bias_co", "variance", "variance_co", "max_c1", "closed_form_gap",
                 "alpha_le_one", "alpha_le_c1", "c1_le_one", "bias_violations", "variance_violations", "pass"});
        for (const auto& row : r.coteaching) {
            csv << row.id << row.residual << row.bias << row.bias_co << row.variance << row.variance_co
                << row.max_c1 << row.closed_form_gap << row.all_alpha_le_one << row.all_alpha_le_c1
                << row.c1_le_one << row.bias_violations << row.variance_violations << row.pass;
            csv.end();
        }
    }

    auto tally = [&](const std::string& suite) {
        std::size_t n = 0, ok = 0;
        double worst = 0.0;
        for (const auto& row : r.identity)
            if (row.suite == suite) {
                ++n;
                ok += row.pass;
                worst = std::max(worst, std::abs(row.residual));
            }
        return json{{"instances", n}, {"passed", ok}, {"max_abs_residual", worst}};
    };
    std::size_t co_ok = 0, alpha1 = 0, alpha_c1 = 0, c1_ok = 0;
    double co_worst = 0.0;
    for (const auto& row : r.coteaching) {
        co_ok += row.pass;
        alpha1 += row.all_alpha_le_one;
        alpha_c1 += row.all_alpha_le_c1;
        c1_ok += row.c1_le_one;
        co_worst = std::max(co_worst, std::abs(row.residual));
    }
    json summary{{"seed", cfg.seed},
                 {"residual_tolerance", cfg.residual_tolerance},
                 {"identity", tally("random")},
                 {"dirac", tally("dirac")},
                 {"ones", tally("ones")},
                 {"coteaching",
                  {{"instances", r.coteaching.size()},
                   {"passed", co_ok},
                   {"max_abs_residual", co_worst},
                   {"alpha_le_one_instances", alpha1},
                   {"alpha_le_c1_instances", alpha_c1},
                   {"c1_le_one_instances", c1_ok}}},
                 {"pass", r.pass()}};

    std::cout << "bias-variance identity: " << summary["identity"]["passed"] << "/"
              << summary["identity"]["instances"] << " (max |residual| " << summary["identity"]["max_abs_residual"]
              << ")\n"
              << "dirac masks:            " << summary["dirac"]["passed"] << "/" << summary["dirac"]["instances"]
              << '\n'
              << "teacher q_t = 1:        " << summary["ones"]["passed"] << "/" << summary["ones"]["instances"]
              << '\n'
              << "co-teaching:            " << co_ok << "/" << r.coteaching.size() << " (alpha <= 1 on " << alpha1
              << ", alpha <= C1 on " << alpha_c1 << ", C1 <= 1 on " << c1_ok << ")\n";

    if (sorting) {
        const auto s = exp::run_channel_info(*sorting);
        write_channel_csv(out / "sorting.csv", s);
        summary["sorting"] = sorting_json(s);
        std::cout << "sorting spearman:       nested " << s.nested_stats.spearman << ", baseline "
                  << s.baseline_stats.spearman << '\n';
    }
    write_json(out / "theory.json", summary);
    if (!r.pass())
        throw AssertionFailure(std::to_string(r.identity_failures + r.coteaching_failures) +
                               " theory checks failed, see " + out.string());
    return 0;
}

int cmd_toy_regression(const Common& c)
{
    json doc = load_doc(c);
    const bool with_dropout = flag(doc, "with_dropout", true);
    doc.erase("with_dropout");
    toy::ToyConfig cfg;
    config::from_json(doc, cfg);
    const fs::path out = prepare_out(c);

    const auto r = toy::run_toy_regression(cfg, with_dropout);
    std::vector<std::string> header{"x"};
    for (const auto& v : r.variants)
        header.push_back(v.name);
    {
        Csv csv(out / "predictions.csv", header);
        for (std::size_t i = 0; i < r.grid_x.size(); ++i) {
            csv << r.grid_x[i];
            for (const auto& v : r.variants)
                csv << v.grid_prediction[i];
            csv.end();
        }
    }
    {
        header.insert(header.begin() + 1, {"y", "clean"});
        Csv csv(out / "train_points.csv", header);
        for (std::size_t i = 0; i < r.data.x.size(); ++i) {
            csv << r.data.x[i] << r.data.y[i] << r.data.x[i];
            for (const auto& v : r.variants)
                csv << v.train_prediction[i];
            csv.end();
        }
    }
    json mse = json::array();
    {
        Csv csv(out / "mse.csv", {"variant", "family", "parameter", "mse_clean", "mse_noisy", "final_loss"});
        for (const auto& v : r.variants) {
            csv << v.name << v.family << v.parameter << v.mse_clean << v.mse_noisy << v.final_loss;
            csv.end();
            mse.push_back({{"variant", v.name}, {"mse_clean", v.mse_clean}, {"mse_noisy", v.mse_noisy}});
        }
    }
    json cfg_json = config::to_json(cfg);
    cfg_json["with_dropout"] = with_dropout;
    write_json(out / "summary.json", {{"config", cfg_json}, {"mse", mse}});

    std::cout << "variant            mse(y=x)   mse(noisy)\n";
    for (const auto& v : r.variants) {
        std::string name = v.name;
        name.resize(18, ' ');
        std::cout << name << ' ' << v.mse_clean << "   " << v.mse_noisy << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Compression-regularized training under label noise: data, training and theory checks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "nestco 1.0");

    Common common;
    struct Command {
        CLI::App* app;
        int (*run)(const Common&);
    };
    const std::vector<Command> commands{
        {app.add_subcommand("gen-data", "Generate and export a noisy Gaussian-blob dataset"), cmd_gen_data},
        {app.add_subcommand("toy-regression", "Noisy 1-D regression with baseline, Nested and Dropout MLPs"),
         cmd_toy_regression},
        {app.add_subcommand("train", "Stage one: train two compression-regularized models"), cmd_train},
        {app.add_subcommand("coteach", "Stage two: co-teaching fine-tuning of two stage-one checkpoints"),
         cmd_coteach},
        {app.add_subcommand("select-kstar", "Pick the truncation point k* of a Nested model on validation data"),
         cmd_select_kstar},
        {app.add_subcommand("verify-theory", "Check the risk decompositions on enumerable problems"),
         cmd_verify_theory},
        {app.add_subcommand("channel-info", "Per-channel label information of a Nested model and a baseline"),
         cmd_channel_info},
    };
    for (const auto& cmd : commands)
        add_common(cmd.app, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        kernels::set_threads(common.threads);
        for (const auto& cmd : commands)
            if (cmd.app->parsed())
                return cmd.run(common);
    } catch (const AssertionFailure& e) {
        std::cerr << "assertion failed: " << e.what() << '\n';
        return 4;
    } catch (const io::IoError& e) {
        std::cerr << "missing or unreadable artifact: " << e.what() << '\n';
        return 3;
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
