#include "nestco/analysis.hpp"

#include "nestco/errors.hpp"
#include "nestco/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nestco::analysis {

using lvm::EnumerableProblem;

namespace {

double entropy(std::span<const double> p)
{
    double h = 0.0;
    for (double v : p)
        if (v > 0.0)
            h -= v * std::log(v);
    return h;
}

double kl(std::span<const double> p, std::span<const double> q)
{
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0)
            s += p[i] * std::log(p[i] / q[i]);
    return s;
}

std::span<const double> decoder_row(const EnumerableProblem& pr, std::size_t x, std::size_t m)
{
    return {pr.decoder.data() + (x * pr.masks + m) * pr.labels, pr.labels};
}

struct NoiseTerms {
    double h_given_eps = 0.0;
    double info = 0.0;
};

NoiseTerms noise_terms(const EnumerableProblem& pr, std::size_t x, std::span<const double> py)
{
    NoiseTerms t;
    for (std::size_t e = 0; e < pr.noises; ++e)
        t.h_given_eps +=
            pr.p_noise[e] * entropy({pr.label_table.data() + (x * pr.noises + e) * pr.labels, pr.labels});
    t.info = entropy(py) - t.h_given_eps;
    return t;
}

void finish(DecompositionReport& r)
{
    r.const_term = r.h_y_given_x_eps + r.i_y_eps - r.expected_log_c1;
    r.residual = r.lhs_risk - (r.bias_term + r.variance_term + r.const_term);
}

} // namespace

DecompositionReport decompose_risk(const EnumerableProblem& pr)
{
    pr.validate();
    DecompositionReport r;
    r.bias_per_x.assign(pr.inputs, 0.0);
    r.variance_per_x.assign(pr.inputs, 0.0);
    for (std::size_t x = 0; x < pr.inputs; ++x) {
        const auto py = pr.p_label_given_x(x);
        const auto qt = lvm::tilde_q(pr, x);
        double lhs = 0.0;
        for (std::size_t y = 0; y < pr.labels; ++y)
            if (py[y] > 0.0)
                lhs += py[y] * lvm::exact_Lq(pr, x, y);
        double var = 0.0;
        for (std::size_t m = 0; m < pr.masks; ++m)
            if (pr.mask_probs[m] > 0.0)
                var += pr.mask_probs[m] * kl(qt, decoder_row(pr, x, m));
        const auto nt = noise_terms(pr, x, py);

        r.bias_per_x[x] = kl(py, qt);
        r.variance_per_x[x] = var;
        r.lhs_risk += pr.p_x[x] * lhs;
        r.bias_term += pr.p_x[x] * r.bias_per_x[x];
        r.variance_term += pr.p_x[x] * var;
        r.h_y_given_x_eps += pr.p_x[x] * nt.h_given_eps;
        r.i_y_eps += pr.p_x[x] * nt.info;
    }
    finish(r);
    return r;
}

TeacherTable TeacherTable::from_scores(const EnumerableProblem& pr, const lvm::TeacherScores& s)
{
    if (s.scores.size() != pr.inputs * pr.labels)
        throw UsageError("teacher scores must cover every (x, y) of the problem");
    for (double v : s.scores)
        if (std::isnan(v))
            throw UsageError("teacher score missing for some (x, y)");
    return {pr.inputs, pr.labels, s.scores};
}

CoTeachingReport decompose_risk_coteaching(const EnumerableProblem& pr, const lvm::TeacherScores& teacher)
{
    return decompose_risk_coteaching(pr, TeacherTable::from_scores(pr, teacher));
}

CoTeachingReport decompose_risk_coteaching(const EnumerableProblem& pr, const TeacherTable& t)
{
    pr.validate();
    if (t.inputs != pr.inputs || t.labels != pr.labels || t.q_t.size() != pr.inputs * pr.labels)
        throw UsageError("teacher table does not cover the problem");
    for (double v : t.q_t) {
        if (v == 0.0)
            throw DomainError("teacher score of zero makes the taught decoder degenerate");
        if (!(v > 0.0 && v <= 1.0))
            throw DomainError("teacher scores must lie in (0, 1]");
    }

    const std::size_t X = pr.inputs, Y = pr.labels, M = pr.masks;
    CoTeachingReport rep;
    rep.plain = decompose_risk(pr);
    auto& tr = rep.taught;
    tr.bias_per_x.assign(X, 0.0);
    tr.variance_per_x.assign(X, 0.0);
    rep.alpha.assign(X * Y, 0.0);
    rep.c1.assign(X * M, 0.0);
    rep.c2.assign(X, 0.0);
    rep.tilde_q_co_closed.assign(X * Y, 0.0);
    rep.bias_co_per_x.assign(X, 0.0);
    rep.variance_co_per_x.assign(X, 0.0);
    rep.alpha_le_one.assign(X, 0);
    rep.alpha_le_c1.assign(X, 0);
    rep.bias_decreased.assign(X, 0);
    rep.variance_increased.assign(X, 0);
    rep.c1_le_one = true;
    rep.c2_positive = true;

    std::vector<double> qco(M * Y);
    for (std::size_t x = 0; x < X; ++x) {
        const auto py = pr.p_label_given_x(x);
        const auto qtil = lvm::tilde_q(pr, x);

        double exp_log_c1 = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            double c1 = 0.0;
            for (std::size_t y = 0; y < Y; ++y) {
                qco[m * Y + y] = std::exp(t(x, y) * std::log(pr.q(x, m, y)));
                c1 += qco[m * Y + y];
            }
            for (std::size_t y = 0; y < Y; ++y)
                qco[m * Y + y] /= c1;
            rep.c1[x * M + m] = c1;
            if (pr.mask_probs[m] > 0.0) {
                exp_log_c1 += pr.mask_probs[m] * std::log(c1);
                if (c1 > 1.0 + condition_slack)
                    rep.c1_le_one = false;
            }
        }

        // Geometric ensemble of the taught decoders.
        std::vector<double> geo(Y, 0.0);
        for (std::size_t y = 0; y < Y; ++y) {
            double s = 0.0;
            for (std::size_t m = 0; m < M; ++m)
                if (pr.mask_probs[m] > 0.0)
                    s += pr.mask_probs[m] * std::log(qco[m * Y + y]);
            geo[y] = std::exp(s);
        }
        const double gz = std::accumulate(geo.begin(), geo.end(), 0.0);
        for (double& v : geo)
            v /= gz;

        double lhs = 0.0;
        for (std::size_t y = 0; y < Y; ++y)
            if (py[y] > 0.0)
                lhs += py[y] * t(x, y) * lvm::exact_Lq(pr, x, y);

        double var_geo = 0.0, var_closed = 0.0;
        double c2 = 0.0;
        for (std::size_t y = 0; y < Y; ++y)
            c2 += std::exp(t(x, y)) * qtil[y];
        rep.c2[x] = c2;
        if (!(c2 > 0.0))
            rep.c2_positive = false;
        std::span<double> closed(rep.tilde_q_co_closed.data() + x * Y, Y);
        for (std::size_t y = 0; y < Y; ++y) {
            closed[y] = std::exp(t(x, y)) * qtil[y] / c2;
            rep.alpha[x * Y + y] = c2 / std::exp(t(x, y));
            rep.closed_form_gap = std::max(rep.closed_form_gap, std::abs(closed[y] - geo[y]));
        }
        for (std::size_t m = 0; m < M; ++m) {
            if (pr.mask_probs[m] <= 0.0)
                continue;
            const std::span<const double> row(qco.data() + m * Y, Y);
            var_geo += pr.mask_probs[m] * kl(geo, row);
            var_closed += pr.mask_probs[m] * kl(closed, row);
        }
        const auto nt = noise_terms(pr, x, py);

        tr.bias_per_x[x] = kl(py, geo);
        tr.variance_per_x[x] = var_geo;
        tr.lhs_risk += pr.p_x[x] * lhs;
        tr.bias_term += pr.p_x[x] * tr.bias_per_x[x];
        tr.variance_term += pr.p_x[x] * var_geo;
        tr.h_y_given_x_eps += pr.p_x[x] * nt.h_given_eps;
        tr.i_y_eps += pr.p_x[x] * nt.info;
        tr.expected_log_c1 += pr.p_x[x] * exp_log_c1;

        rep.bias_co_per_x[x] = kl(py, closed);
        rep.variance_co_per_x[x] = var_closed;
        rep.bias_co += pr.p_x[x] * rep.bias_co_per_x[x];
        rep.variance_co += pr.p_x[x] * var_closed;

        bool le_one = true, le_c1 = true;
        for (std::size_t y = 0; y < Y; ++y) {
            const double a = rep.alpha[x * Y + y];
            if (py[y] > 0.0 && a > 1.0 + condition_slack)
                le_one = false;
            for (std::size_t m = 0; m < M; ++m)
                if (pr.mask_probs[m] > 0.0 && a > rep.c1[x * M + m] + condition_slack)
                    le_c1 = false;
        }
        rep.alpha_le_one[x] = le_one;
        rep.alpha_le_c1[x] = le_c1;
        rep.bias_decreased[x] = rep.bias_co_per_x[x] <= rep.plain.bias_per_x[x] + condition_slack;
        rep.variance_increased[x] = rep.variance_co_per_x[x] >= rep.plain.variance_per_x[x] - condition_slack;
        rep.bias_violations += le_one && !rep.bias_decreased[x];
        rep.variance_violations += le_c1 && !rep.variance_increased[x];
    }
    finish(tr);
    rep.all_alpha_le_one = std::all_of(rep.alpha_le_one.begin(), rep.alpha_le_one.end(), [](auto f) { return f; });
    rep.all_alpha_le_c1 = std::all_of(rep.alpha_le_c1.begin(), rep.alpha_le_c1.end(), [](auto f) { return f; });
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi)
{
    return lo + rng.below(hi - lo + 1);
}

/// Flat-Dirichlet draw on the entries where `keep` is set. The additive floor
/// keeps every kept entry strictly positive.
std::vector<double> dirichlet(Rng& rng, std::size_t n, const std::vector<bool>& keep)
{
    std::vector<double> p(n, 0.0);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) {
            p[i] = -std::log1p(-rng.uniform()) + 1e-3;
            s += p[i];
        }
    for (double& v : p)
        v /= s;
    return p;
}

std::vector<double> dirichlet(Rng& rng, std::size_t n)
{
    return dirichlet(rng, n, std::vector<bool>(n, true));
}

} // namespace

EnumerableProblem random_problem(Rng& rng, const RandomProblemConfig& cfg)
{
    EnumerableProblem pr;
    pr.inputs = between(rng, 1, cfg.max_inputs);
    pr.noises = between(rng, 1, cfg.max_noises);
    pr.labels = between(rng, 2, cfg.max_labels);
    pr.masks = cfg.dirac_mask ? 1 : between(rng, 1, cfg.max_masks);

    pr.p_x = dirichlet(rng, pr.inputs);
    pr.p_noise = dirichlet(rng, pr.noises);
    pr.mask_probs = dirichlet(rng, pr.masks);
    for (std::size_t x = 0; x < pr.inputs; ++x) {
        std::vector<bool> support(pr.labels);
        bool any = false;
        for (std::size_t y = 0; y < pr.labels; ++y) {
            support[y] = !rng.bernoulli(cfg.label_dropout);
            any = any || support[y];
        }
        if (!any)
            support[rng.below(pr.labels)] = true;
        const auto shared = dirichlet(rng, pr.labels, support);
        for (std::size_t e = 0; e < pr.noises; ++e) {
            const auto row = cfg.noiseless ? shared : dirichlet(rng, pr.labels, support);
            pr.label_table.insert(pr.label_table.end(), row.begin(), row.end());
        }
    }
    for (std::size_t r = 0; r < pr.inputs * pr.masks; ++r) {
        const auto row = dirichlet(rng, pr.labels);
        pr.decoder.insert(pr.decoder.end(), row.begin(), row.end());
    }
    pr.validate();
    return pr;
}

TeacherTable random_teacher(const EnumerableProblem& pr, TeacherKind kind, Rng& rng)
{
    TeacherTable t{pr.inputs, pr.labels, std::vector<double>(pr.inputs * pr.labels, 1.0)};
    for (std::size_t x = 0; x < pr.inputs; ++x) {
        TeacherKind k = kind;
        if (k == TeacherKind::mixed)
            k = static_cast<TeacherKind>(rng.below(3));
        const auto py = pr.p_label_given_x(x);
        const double high = 0.8 + 0.2 * rng.uniform();
        for (std::size_t y = 0; y < pr.labels; ++y) {
            double& v = t.q_t[x * pr.labels + y];
            switch (k) {
            case TeacherKind::uniform:
                v = 0.05 + 0.95 * rng.uniform();
                break;
            case TeacherKind::confident:
                v = py[y] > 0.0 ? high : 0.05 + 0.3 * rng.uniform();
                break;
            case TeacherKind::ones:
            case TeacherKind::mixed:
                v = 1.0;
                break;
            }
        }
    }
    return t;
}

// ---------------------------------------------------------------------------

namespace {

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

Split probe_split(std::size_t n, const ProbeConfig& cfg)
{
    if (n < cfg.min_examples || n < 2)
        throw UsageError("probe needs at least " + std::to_string(std::max<std::size_t>(cfg.min_examples, 2)) +
                         " examples, got " + std::to_string(n));
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw DomainError("probe train_fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(cfg.seed).split(0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::round(cfg.train_fraction * static_cast<double>(n))), 1, n - 1);
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return s;
}

} // namespace

double marginal_entropy(std::span<const int> labels, std::size_t classes, const ProbeConfig& cfg)
{
    const auto split = probe_split(labels.size(), cfg);
    std::vector<double> p(classes, 0.0);
    for (std::size_t i : split.test)
        p[static_cast<std::size_t>(labels[i])] += 1.0;
    for (double& v : p)
        v /= static_cast<double>(split.test.size());
    return entropy(p);
}

double probe_entropy(std::span<const double> feature, std::span<const int> labels, std::size_t classes,
                     const ProbeConfig& cfg)
{
    if (feature.size() != labels.size())
        throw DimensionError("probe feature and label counts differ");
    if (classes < 2)
        throw DomainError("probe needs at least two classes");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw DomainError("probe label out of range");
    const auto split = probe_split(feature.size(), cfg);

    double mean = 0.0, sq = 0.0;
    for (std::size_t i : split.train)
        mean += feature[i];
    mean /= static_cast<double>(split.train.size());
    for (std::size_t i : split.train)
        sq += (feature[i] - mean) * (feature[i] - mean);
    double sd = std::sqrt(sq / static_cast<double>(split.train.size()));
    if (!(sd > 1e-12))
        sd = 1.0;

    auto make = [&](const std::vector<std::size_t>& rows, Tensor& x, std::vector<int>& y) {
        x = Tensor({rows.size(), 1});
        y.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            x[r] = (feature[rows[r]] - mean) / sd;
            y[r] = labels[rows[r]];
        }
    };
    Tensor x_train, x_test;
    std::vector<int> y_train, y_test;
    make(split.train, x_train, y_train);
    make(split.test, x_test, y_test);

    Rng init_rng = Rng(cfg.seed).split(1);
    auto probe = lvm::LatentModel::create(MlpSpec::relu_chain({1, cfg.hidden, classes}), masks::NoMask{}, 1,
                                          init_rng);
    SgdState state;
    const Rng order_rng = Rng(cfg.seed).split(2);
    const std::size_t n = split.train.size();
    const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng r = order_rng.split(epoch);
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[r.below(i)]);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t len = std::min(bs, n - start);
            Tensor xb({len, 1});
            std::vector<int> yb(len);
            for (std::size_t j = 0; j < len; ++j) {
                xb[j] = x_train[order[start + j]];
                yb[j] = y_train[order[start + j]];
            }
            Rng unused(0);
            auto res = lvm::loss_Lq(probe, xb, yb, 1, unused);
            sgd_step(probe.params, res.grads, cfg.lr, cfg.momentum, 0.0, state);
        }
    }
    Rng unused(0);
    const double ce = lvm::loss_Lq(probe, x_test, y_test, 1, unused, false).loss;
    return std::clamp(ce, 0.0, std::log(static_cast<double>(classes)));
}

Tensor channel_features(const lvm::LatentModel& model, const Tensor& x, Rng& rng)
{
    model.validate();
    const bool masked = !std::holds_alternative<masks::NoMask>(model.mask);
    if (!masked)
        return forward(model.spec, model.params, x).tape.activation(model.mask_layer);
    const std::size_t B = x.rank() == 1 ? 1 : x.rows();
    std::vector<masks::Mask> rows;
    rows.reserve(B);
    for (std::size_t r = 0; r < B; ++r)
        rows.push_back(masks::sample_mask(model.mask, rng));
    return forward(model.spec, model.params, x, rows, model.mask_layer).tape.activation(model.mask_layer);
}

double estimate_channel_entropy(const lvm::LatentModel& model, const noise::LabeledData& data, std::size_t k,
                                const ProbeConfig& cfg)
{
    if (k < 1 || k > model.channels())
        throw DomainError("channel index must lie in 1.." + std::to_string(model.channels()));
    Rng rng = Rng(cfg.seed).split(3);
    const Tensor z = channel_features(model, data.inputs, rng);
    std::vector<double> col(z.rows());
    for (std::size_t r = 0; r < z.rows(); ++r)
        col[r] = z.at(r, k - 1);
    return probe_entropy(col, data.labels, data.classes, cfg);
}

ChannelInfoReport channel_info(const lvm::LatentModel& model, const noise::LabeledData& data,
                               const ProbeConfig& cfg)
{
    Rng rng = Rng(cfg.seed).split(3);
    const Tensor z = channel_features(model, data.inputs, rng);
    const std::size_t K = model.channels();
    ChannelInfoReport rep;
    rep.classes = data.classes;
    rep.entropy.assign(K, 0.0);
    rep.marginal_entropy = marginal_entropy(data.labels, data.classes, cfg);

    const auto n = static_cast<std::ptrdiff_t>(K);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        std::vector<double> col(z.rows());
        for (std::size_t r = 0; r < z.rows(); ++r)
            col[r] = z.at(r, static_cast<std::size_t>(k));
        rep.entropy[static_cast<std::size_t>(k)] = probe_entropy(col, data.labels, data.classes, cfg);
    }
    rep.info.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        rep.info[k] = rep.marginal_entropy - rep.entropy[k];
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> ranks(std::span<const double> v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]])
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            r[idx[t]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DimensionError("spearman needs equal-length series");
    const std::size_t n = a.size();
    if (n < 2)
        return 0.0;
    const auto ra = ranks(a), rb = ranks(b);
    const double mean = 0.5 * static_cast<double>(n + 1);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0.0 || sbb == 0.0)
        return 0.0;
    return sab / std::sqrt(saa * sbb);
}

SortingStats check_sorting(std::span<const double> info)
{
    SortingStats s;
    std::vector<double> index(info.size());
    std::iota(index.begin(), index.end(), 1.0);
    s.spearman = spearman(index, info);
    for (std::size_t i = 0; i < info.size(); ++i)
        for (std::size_t j = i + 1; j < info.size(); ++j) {
            ++s.pairs;
            s.violations += info[i] < info[j];
        }
    return s;
}

SortingStats check_sorting(const ChannelInfoReport& report)
{
    return check_sorting(report.info);
}

} // namespace nestco::analysis
