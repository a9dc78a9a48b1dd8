#include "nestco/toy.hpp"

#include "nestco/errors.hpp"
#include "nestco/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nestco::toy {

void ToyConfig::validate() const
{
    if (n_points < 2)
        throw DomainError("toy regression needs at least two points");
    if (!(x_max > x_min))
        throw DomainError("x_max must exceed x_min");
    if (widths.size() < 3 || widths.front() != 1 || widths.back() != 1)
        throw DimensionError("toy network must map 1 -> ... -> 1 with a hidden layer");
    if (mask_layer < 1 || mask_layer + 1 >= widths.size())
        throw DimensionError("toy mask boundary must be a hidden layer");
    for (auto k : ks)
        if (k < 1 || k > widths[mask_layer])
            throw DomainError("truncation point " + std::to_string(k) + " outside 1.." +
                              std::to_string(widths[mask_layer]));
    for (double p : p_drops)
        masks::DropoutSpec{p, widths[mask_layer]}.validate();
    masks::NestedSpec{sigma_nest, widths[mask_layer]}.validate();
    if (!(lr > 0.0) || !(final_lr >= 0.0))
        throw DomainError("toy learning rates must be positive");
    if (grid_points < 2)
        throw DomainError("grid needs at least two points");
}

const Variant& ToyResult::find(const std::string& name) const
{
    for (const auto& v : variants)
        if (v.name == name)
            return v;
    throw UsageError("no toy variant named '" + name + "'");
}

namespace {

std::string fmt_param(double p)
{
    std::ostringstream os;
    os << p;
    return os.str();
}

struct Scaler {
    double mean = 0.0;
    double sd = 1.0;
};

Scaler fit_scaler(const std::vector<double>& x, bool enabled)
{
    Scaler s;
    if (!enabled)
        return s;
    for (double v : x)
        s.mean += v;
    s.mean /= static_cast<double>(x.size());
    double sq = 0.0;
    for (double v : x)
        sq += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(sq / static_cast<double>(x.size() - 1));
    return s;
}

Tensor column(const std::vector<double>& x, Scaler s)
{
    Tensor t({x.size(), 1});
    for (std::size_t i = 0; i < x.size(); ++i)
        t[i] = (x[i] - s.mean) / s.sd;
    return t;
}

std::vector<double> flat(const Tensor& t)
{
    return {t.values().begin(), t.values().end()};
}

double mse(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

} // namespace

ParamSet initial_params(const ToyConfig& cfg, const Tensor& x_in)
{
    const MlpSpec spec = MlpSpec::relu_chain(cfg.widths);
    Rng rng = Rng(cfg.seed).split(1);
    ParamSet p = ParamSet::init(spec, rng);
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
        for (double& b : p.mutable_bias(l).values())
            b = bound * (2.0 * rng.uniform() - 1.0);
    }
    if (cfg.spread_input_kinks) {
        const auto xs = x_in.values();
        const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        const Tensor& w0 = p.weight(0);
        auto b0 = p.mutable_bias(0).values();
        for (std::size_t j = 0; j < spec.widths[1]; ++j)
            b0[j] = -w0.at(j, 0) * (*lo + (*hi - *lo) * rng.uniform());
    }
    if (!cfg.activate_masked_layer)
        return p;

    const std::size_t l = cfg.mask_layer - 1;
    const Tensor h = forward(spec, p, x_in).tape.activation(l);
    const Tensor& w = p.weight(l);
    auto bias = p.mutable_bias(l).values();
    for (std::size_t j = 0; j < spec.widths[l + 1]; ++j) {
        double lowest = INFINITY;
        for (std::size_t r = 0; r < h.rows(); ++r) {
            double a = 0.0;
            for (std::size_t i = 0; i < h.cols(); ++i)
                a += w.at(j, i) * h.at(r, i);
            lowest = std::min(lowest, a);
        }
        bias[j] = -lowest + cfg.activation_margin;
    }
    return p;
}

ToyResult run_toy_regression(const ToyConfig& cfg, bool with_dropout)
{
    cfg.validate();
    ToyResult res;
    res.data = noise::gen_toy_regression(cfg.n_points, cfg.x_min, cfg.x_max, cfg.noise_std, cfg.seed);
    const Scaler sc = fit_scaler(res.data.x, cfg.standardize_input);
    const Scaler ty = fit_scaler(res.data.y, cfg.standardize_target);
    std::vector<double> target(res.data.y.size());
    for (std::size_t i = 0; i < target.size(); ++i)
        target[i] = (res.data.y[i] - ty.mean) / ty.sd;
    const Tensor x = column(res.data.x, sc);
    for (std::size_t i = 0; i < cfg.grid_points; ++i)
        res.grid_x.push_back(cfg.x_min + (cfg.x_max - cfg.x_min) * static_cast<double>(i) /
                                             static_cast<double>(cfg.grid_points - 1));
    const Tensor grid = column(res.grid_x, sc);

    const MlpSpec spec = MlpSpec::relu_chain(cfg.widths);
    const std::size_t K = cfg.widths[cfg.mask_layer];
    const ParamSet init = initial_params(cfg, x);

    struct Job {
        masks::MaskDistribution mask;
        std::uint64_t id;
    };
    std::vector<Job> jobs{{masks::NoMask{}, 0}, {masks::NestedSpec{cfg.sigma_nest, K}, 1}};
    if (with_dropout)
        for (std::size_t i = 0; i < cfg.p_drops.size(); ++i)
            jobs.push_back({masks::DropoutSpec{cfg.p_drops[i], K}, 2 + i});

    train::RegressionConfig rc;
    rc.epochs = cfg.epochs;
    rc.lr.base = cfg.lr;
    rc.lr.warmup_iterations = cfg.warmup;
    rc.lr.decay = LrDecay::cosine;
    rc.lr.final_lr = cfg.final_lr;
    rc.lr.total_epochs = std::max<std::size_t>(cfg.epochs, 1);
    rc.momentum = cfg.momentum;
    rc.weight_decay = cfg.weight_decay;
    rc.n_mask_samples = cfg.n_mask_samples;

    std::vector<lvm::LatentModel> trained(jobs.size());
    std::vector<double> final_loss(jobs.size(), 0.0);
    const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < n_jobs; ++j) {
        const auto& job = jobs[static_cast<std::size_t>(j)];
        lvm::LatentModel m{spec, init, job.mask, cfg.mask_layer, lvm::Task::regression};
        auto local = rc;
        local.seed = Rng(cfg.seed).split({2, job.id}).key();
        const auto losses = train::train_regression(m, x, target, local);
        final_loss[static_cast<std::size_t>(j)] = losses.empty() ? 0.0 : losses.back();
        trained[static_cast<std::size_t>(j)] = std::move(m);
    }

    auto unscale = [&](const Tensor& t) {
        auto v = flat(t);
        for (double& e : v)
            e = e * ty.sd + ty.mean;
        return v;
    };
    auto add = [&](const lvm::LatentModel& m, const lvm::PredictMode& mode, std::string name,
                   std::string family, double param, double loss) {
        Variant v;
        v.name = std::move(name);
        v.family = std::move(family);
        v.parameter = param;
        v.grid_prediction = unscale(lvm::predict(m, grid, mode));
        v.train_prediction = unscale(lvm::predict(m, x, mode));
        v.mse_clean = mse(v.train_prediction, res.data.x);
        v.mse_noisy = mse(v.train_prediction, res.data.y);
        v.final_loss = loss;
        res.variants.push_back(std::move(v));
    };
    add(trained[0], lvm::Truncate{K}, "baseline", "baseline", 0.0, final_loss[0]);
    for (auto k : cfg.ks)
        add(trained[1], lvm::Truncate{k}, "nested_k" + std::to_string(k), "nested", static_cast<double>(k),
            final_loss[1]);
    for (std::size_t j = 2; j < jobs.size(); ++j) {
        const double p = std::get<masks::DropoutSpec>(jobs[j].mask).p_drop;
        add(trained[j], lvm::ExpectedMask{}, "dropout_p" + fmt_param(p), "dropout", p, final_loss[j]);
    }
    return res;
}

} // namespace nestco::toy
