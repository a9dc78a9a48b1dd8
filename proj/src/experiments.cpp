#include "nestco/experiments.hpp"

#include "nestco/errors.hpp"

#include <algorithm>
#include <cmath>

namespace nestco::exp {

void BlobData::validate() const
{
    if (classes < 2 || dim < 1)
        throw DomainError("blobs need at least two classes and one dimension");
    if (train_per_class < 1 || test_per_class < 1)
        throw DomainError("blob splits need at least one example per class");
    if (!(separation >= 0.0))
        throw DomainError("blob separation must be non-negative");
    (void)noise.matrix(classes);
}

Splits make_blob_splits(const BlobData& cfg, std::uint64_t seed)
{
    cfg.validate();
    const Rng root(seed);
    Rng r_train = root.split(10), r_val = root.split(11), r_test = root.split(12), r_noise = root.split(13);
    const auto clean = noise::gen_toy_classification(cfg.classes, cfg.train_per_class, cfg.separation, cfg.dim, r_train);
    Splits s;
    s.validation = noise::gen_toy_classification(cfg.classes, cfg.val_per_class, cfg.separation, cfg.dim, r_val);
    s.test = noise::gen_toy_classification(cfg.classes, cfg.test_per_class, cfg.separation, cfg.dim, r_test);
    noise::NoiseSpec spec = cfg.noise;
    spec.seed = seed;
    s.train = noise::corrupt_labels(clean, spec.matrix(cfg.classes), r_noise, spec);
    return s;
}

void ModelConfig::validate() const
{
    if (hidden.empty())
        throw DimensionError("model needs at least one hidden layer");
    if (mask_layer < 1 || mask_layer > hidden.size())
        throw DimensionError("mask_layer must name a hidden layer (1.." + std::to_string(hidden.size()) + ")");
    if (p_drop > 0.0 && sigma_nest > 0.0)
        throw DomainError("choose either Dropout (p_drop > 0) or Nested Dropout (sigma_nest > 0), not both");
    if (p_drop < 0.0 || sigma_nest < 0.0)
        throw DomainError("p_drop and sigma_nest must be non-negative");
    if (p_drop > 0.0)
        masks::DropoutSpec{p_drop, hidden[mask_layer - 1]}.validate();
}

void ModelConfig::require_compression() const
{
    validate();
    if (!(p_drop > 0.0) && !(sigma_nest > 0.0))
        throw DomainError("set exactly one of p_drop > 0 or sigma_nest > 0");
}

masks::MaskDistribution ModelConfig::mask() const
{
    validate();
    const std::size_t K = hidden[mask_layer - 1];
    if (sigma_nest > 0.0)
        return masks::NestedSpec{sigma_nest, K};
    if (p_drop > 0.0)
        return masks::DropoutSpec{p_drop, K};
    return masks::NoMask{K};
}

MlpSpec ModelConfig::spec(std::size_t in, std::size_t classes) const
{
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(classes);
    return MlpSpec::relu_chain(std::move(w));
}

lvm::LatentModel make_model(const ModelConfig& cfg, std::size_t in, std::size_t classes, std::uint64_t seed)
{
    Rng rng(seed);
    return lvm::LatentModel::create(cfg.spec(in, classes), cfg.mask(), cfg.mask_layer, rng);
}

TwoStageConfig default_two_stage()
{
    TwoStageConfig c;
    c.data.noise.kind = noise::NoiseKind::symmetric;
    c.data.noise.tau = 0.4;
    c.data.train_per_class = 50;
    c.data.test_per_class = 2000;
    c.model.sigma_nest = 6.0;
    c.stage_one.epochs = 300;
    c.stage_one.lr.base = 0.05;
    c.stage_one.lr.warmup_iterations = 100;
    c.stage_one.lr.decay = LrDecay::step;
    c.stage_one.lr.milestones = {200};
    c.stage_two.lambda_forget = 0.4;
    c.stage_two.epochs = 30;
    c.stage_two.lr.base = 0.005;
    return c;
}

ChannelInfoConfig default_channel_info()
{
    ChannelInfoConfig c;
    c.data.test_per_class = 2000;
    c.model.sigma_nest = 4.0;
    c.training.epochs = 300;
    c.training.lr.base = 0.05;
    return c;
}

namespace {

double mean_selected_fraction(const train::TrainReport& r)
{
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& e : r.epochs)
        if (!std::isnan(e.selected_clean_fraction)) {
            s += e.selected_clean_fraction;
            ++n;
        }
    return n ? s / static_cast<double>(n) : train::not_measured;
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
    return Rng(seed).split({a, b}).key();
}

} // namespace

TwoStageResult run_coteach(const TwoStageConfig& cfg, const lvm::LatentModel& m1, const lvm::LatentModel& m2)
{
    const Splits splits = make_blob_splits(cfg.data, cfg.seed);
    const train::Evaluator eval(splits.test, splits.validation);
    TwoStageResult r;
    r.train_noise_rate = noise::CleanLabelAccess::noise_rate(splits.train);
    r.stage_one_models = {m1, m2};
    r.models = {m1, m2};
    r.stage_one_accuracy = {eval.test_accuracy(m1), eval.test_accuracy(m2)};
    r.stage_one_ensemble_accuracy = eval.test_accuracy(m1, m2);

    auto co = cfg.stage_two;
    co.seed = derive(cfg.seed, 30, 0);
    r.stage_two = train::coteach_finetune(r.models[0], r.models[1], splits.train, co, &eval);
    r.ensemble_accuracy = eval.test_accuracy(r.models[0], r.models[1]);
    r.selected_clean_fraction = mean_selected_fraction(r.stage_two);
    return r;
}

StageOneResult run_stage_one(const TwoStageConfig& cfg)
{
    cfg.model.require_compression();
    const Splits splits = make_blob_splits(cfg.data, cfg.seed);
    const train::Evaluator eval(splits.test, splits.validation);
    StageOneResult r;
    r.models = {make_model(cfg.model, cfg.data.dim, cfg.data.classes, derive(cfg.seed, 20, 1)),
                make_model(cfg.model, cfg.data.dim, cfg.data.classes, derive(cfg.seed, 20, 2))};
    auto c1 = cfg.stage_one, c2 = cfg.stage_one;
    c1.seed = derive(cfg.seed, 21, 1);
    c2.seed = derive(cfg.seed, 21, 2);
    auto reports = train::train_stage_one_pair(r.models[0], r.models[1], splits.train, c1, c2, &eval, cfg.concurrent);
    r.reports = {std::move(reports.first), std::move(reports.second)};
    for (std::size_t i = 0; i < 2; ++i) {
        r.accuracy[i] = eval.test_accuracy(r.models[i]);
        r.kstar[i] = eval.kstar(r.models[i]);
    }
    r.ensemble_accuracy = eval.test_accuracy(r.models[0], r.models[1]);
    r.train_noise_rate = noise::CleanLabelAccess::noise_rate(splits.train);
    return r;
}

TwoStageResult run_two_stage(const TwoStageConfig& cfg)
{
    StageOneResult one = run_stage_one(cfg);
    TwoStageResult r = run_coteach(cfg, one.models[0], one.models[1]);
    r.stage_one = std::move(one.reports);
    return r;
}

ChannelInfoResult run_channel_info(const ChannelInfoConfig& cfg)
{
    if (!(cfg.model.sigma_nest > 0.0) || cfg.model.p_drop > 0.0)
        throw DomainError("channel-info compares a Nested Dropout model (sigma_nest > 0) with a baseline");
    const Splits splits = make_blob_splits(cfg.data, cfg.seed);
    const train::Evaluator eval(splits.test, std::nullopt);

    const auto init_seed = derive(cfg.seed, 40, 0);
    auto nested = make_model(cfg.model, cfg.data.dim, cfg.data.classes, init_seed);
    ModelConfig plain = cfg.model;
    plain.sigma_nest = 0.0;
    auto baseline = make_model(plain, cfg.data.dim, cfg.data.classes, init_seed);

    auto t1 = cfg.training, t2 = cfg.training;
    t1.seed = derive(cfg.seed, 41, 1);
    t2.seed = derive(cfg.seed, 41, 2);
    train::train_stage_one_pair(nested, baseline, splits.train, t1, t2, nullptr, false);

    ChannelInfoResult r;
    r.nested_accuracy = eval.test_accuracy(nested);
    r.baseline_accuracy = eval.test_accuracy(baseline);
    auto probe = cfg.probe;
    probe.seed = derive(cfg.seed, 42, 0);
    r.nested = analysis::channel_info(nested, splits.test, probe);
    r.baseline = analysis::channel_info(baseline, splits.test, probe);
    r.nested_stats = analysis::check_sorting(r.nested);
    r.baseline_stats = analysis::check_sorting(r.baseline);
    return r;
}

namespace {

double report_gap(const analysis::DecompositionReport& a, const analysis::DecompositionReport& b)
{
    double g = 0.0;
    for (auto [u, v] : {std::pair{a.lhs_risk, b.lhs_risk}, {a.bias_term, b.bias_term},
                        {a.variance_term, b.variance_term}, {a.const_term, b.const_term}, {a.residual, b.residual}})
        g = std::max(g, std::abs(u - v));
    return g;
}

IdentityRow identity_row(std::size_t id, std::string suite, const analysis::DecompositionReport& r, double tol)
{
    IdentityRow row;
    row.id = id;
    row.suite = std::move(suite);
    row.lhs = r.lhs_risk;
    row.bias = r.bias_term;
    row.variance = r.variance_term;
    row.const_term = r.const_term;
    row.residual = r.residual;
    row.pass = std::abs(r.residual) < tol;
    return row;
}

} // namespace

TheoryResult run_theory_suite(const TheoryConfig& cfg)
{
    const Rng root(cfg.seed);
    const double tol = cfg.residual_tolerance;
    TheoryResult out;

    for (std::size_t i = 0; i < cfg.instances; ++i) {
        Rng rng = root.split({0, i});
        out.identity.push_back(identity_row(i, "random", analysis::decompose_risk(analysis::random_problem(rng)), tol));
    }
    analysis::RandomProblemConfig dirac;
    dirac.dirac_mask = true;
    for (std::size_t i = 0; i < cfg.dirac_instances; ++i) {
        Rng rng = root.split({1, i});
        auto row = identity_row(i, "dirac", analysis::decompose_risk(analysis::random_problem(rng, dirac)), tol);
        row.pass = row.pass && row.variance == 0.0;
        out.identity.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < cfg.ones_instances; ++i) {
        Rng rng = root.split({2, i});
        const auto problem = analysis::random_problem(rng);
        const auto co = analysis::decompose_risk_coteaching(
            problem, analysis::random_teacher(problem, analysis::TeacherKind::ones, rng));
        auto row = identity_row(i, "ones", co.taught, tol);
        row.max_report_gap = std::max({report_gap(co.taught, co.plain), std::abs(co.bias_co - co.plain.bias_term),
                                       std::abs(co.variance_co - co.plain.variance_term)});
        row.pass = row.pass && row.max_report_gap < 1e-12;
        out.identity.push_back(std::move(row));
    }

    for (std::size_t i = 0; i < cfg.instances; ++i) {
        Rng rng = root.split({3, i});
        const auto problem = analysis::random_problem(rng);
        const auto co = analysis::decompose_risk_coteaching(
            problem, analysis::random_teacher(problem, analysis::TeacherKind::mixed, rng));
        CoTeachingRow row;
        row.id = i;
        row.residual = co.taught.residual;
        row.bias = co.plain.bias_term;
        row.bias_co = co.bias_co;
        row.variance = co.plain.variance_term;
        row.variance_co = co.variance_co;
        row.max_c1 = co.c1.empty() ? 0.0 : *std::max_element(co.c1.begin(), co.c1.end());
        row.closed_form_gap = co.closed_form_gap;
        row.all_alpha_le_one = co.all_alpha_le_one;
        row.all_alpha_le_c1 = co.all_alpha_le_c1;
        row.c1_le_one = co.c1_le_one;
        row.bias_violations = co.bias_violations;
        row.variance_violations = co.variance_violations;
        const double slack = analysis::condition_slack;
        row.pass = std::abs(row.residual) < tol && row.c1_le_one && row.bias_violations == 0 &&
                   row.variance_violations == 0 && (!row.all_alpha_le_one || row.bias_co <= row.bias + slack) &&
                   (!row.all_alpha_le_c1 || row.variance_co >= row.variance - slack);
        out.coteaching.push_back(row);
    }

    for (const auto& r : out.identity)
        out.identity_failures += !r.pass;
    for (const auto& r : out.coteaching)
        out.coteaching_failures += !r.pass;
    return out;
}

} // namespace nestco::exp
