#include "nestco/lvm.hpp"

#include "nestco/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nestco::lvm {

LatentModel LatentModel::create(MlpSpec spec, masks::MaskDistribution mask, std::size_t mask_layer,
                                Rng& rng, Task task)
{
    LatentModel m;
    m.params = ParamSet::init(spec, rng);
    m.spec = std::move(spec);
    m.mask = mask;
    m.mask_layer = mask_layer;
    m.task = task;
    m.validate();
    return m;
}

void LatentModel::validate() const
{
    spec.validate();
    if (!params.matches(spec))
        throw DimensionError("parameter shapes do not match the model spec");
    if (mask_layer < 1 || mask_layer >= spec.layers())
        throw DimensionError("mask boundary must be a hidden layer");
    const std::size_t K = masks::channel_count(mask);
    if (!std::holds_alternative<masks::NoMask>(mask) || K != 0)
        if (K != channels())
            throw DimensionError("mask length " + std::to_string(K) + " does not match masked width " +
                                 std::to_string(channels()));
    if (task == Task::regression && spec.output_width() != 1)
        throw DimensionError("regression models need a single output");
    if (task == Task::classification && spec.output_width() < 2)
        throw DimensionError("classification models need at least two classes");
}

Tensor softmax_rows(const Tensor& logits)
{
    Tensor out = logits;
    const std::size_t R = logits.rank() == 1 ? 1 : logits.rows();
    for (std::size_t r = 0; r < R; ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : row)
            v /= s;
    }
    return out;
}

namespace {

bool masked(const LatentModel& m)
{
    return !std::holds_alternative<masks::NoMask>(m.mask);
}

Tensor as_batch(const Tensor& x)
{
    if (x.rank() == 1)
        return Tensor({1, x.size()}, std::vector<double>(x.values().begin(), x.values().end()));
    return x;
}

/// x stacked n times: row s * B + b is example b under draw s.
Tensor tile(const Tensor& x, std::size_t n)
{
    if (n == 1)
        return x;
    const std::size_t B = x.rows(), D = x.cols();
    Tensor out({B * n, D});
    for (std::size_t s = 0; s < n; ++s)
        std::copy(x.values().begin(), x.values().end(), out.values().begin() + s * B * D);
    return out;
}

ForwardResult masked_forward(const LatentModel& m, const Tensor& x, std::size_t n, Rng& rng)
{
    Tensor xs = tile(x, n);
    if (!masked(m))
        return forward(m.spec, m.params, xs);
    std::vector<masks::Mask> rows;
    rows.reserve(xs.rows());
    for (std::size_t r = 0; r < xs.rows(); ++r)
        rows.push_back(masks::sample_mask(m.mask, rng));
    return forward(m.spec, m.params, xs, rows, m.mask_layer);
}

void check_batch(const LatentModel& m, const Tensor& x, std::size_t n_labels, std::size_t n_samples)
{
    m.validate();
    if (n_samples < 1)
        throw DomainError("n_mask_samples must be at least 1");
    const std::size_t B = x.rank() == 1 ? 1 : x.rows();
    if (n_labels != B)
        throw DimensionError("label count " + std::to_string(n_labels) + " does not match batch " +
                             std::to_string(B));
}

LossResult classification_loss(const LatentModel& m, const Tensor& x_in, std::span<const int> labels,
                               std::span<const double> weights, std::size_t n, Rng& rng, bool with_grad)
{
    if (m.task != Task::classification)
        throw UsageError("integer labels need a classification model");
    check_batch(m, x_in, labels.size(), n);
    const Tensor x = as_batch(x_in);
    const std::size_t B = x.rows();
    const std::size_t C = m.classes();
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw DomainError("label " + std::to_string(y) + " outside 0.." + std::to_string(C - 1));

    auto fr = masked_forward(m, x, n, rng);
    const Tensor& logits = fr.tape.output();
    const double log_floor = std::log(probability_floor);
    const double denom = static_cast<double>(B * n);

    LossResult res;
    res.per_example.assign(B, 0.0);
    Tensor grad({B * n, C});
    double total = 0.0;
    for (std::size_t r = 0; r < B * n; ++r) {
        const std::size_t b = r % B;
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row)
            s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        double logp = row[labels[b]] - lse;
        const bool clamped = logp < log_floor;
        if (clamped) {
            logp = log_floor;
            ++res.clamped;
        }
        const double l = -logp;
        res.per_example[b] += l / static_cast<double>(n);
        total += weights[b] * l;
        if (with_grad && !clamped) {
            auto g = grad.row(r);
            const double w = weights[b] / denom;
            for (std::size_t c = 0; c < C; ++c)
                g[c] = w * std::exp(row[c] - lse);
            g[labels[b]] -= w;
        }
    }
    res.loss = total / denom;
    if (with_grad)
        res.grads = backward(fr.tape, m.params, grad);
    return res;
}

std::vector<double> checked_weights(std::span<const double> w, std::size_t B)
{
    if (w.size() != B)
        throw DimensionError("weight count does not match batch");
    for (double v : w)
        if (!std::isfinite(v) || v < 0.0)
            throw DomainError("example weights must be finite and non-negative");
    return {w.begin(), w.end()};
}

} // namespace

LossResult loss_Lq(const LatentModel& model, const Tensor& x, std::span<const int> labels,
                   std::size_t n_mask_samples, Rng& rng, bool with_grad)
{
    const std::vector<double> ones(labels.size(), 1.0);
    return classification_loss(model, x, labels, ones, n_mask_samples, rng, with_grad);
}

LossResult loss_Lq(const LatentModel& model, const Tensor& x_in, std::span<const double> targets,
                   std::size_t n, Rng& rng, bool with_grad)
{
    if (model.task != Task::regression)
        throw UsageError("real-valued targets need a regression model");
    check_batch(model, x_in, targets.size(), n);
    const Tensor x = as_batch(x_in);
    const std::size_t B = x.rows();

    auto fr = masked_forward(model, x, n, rng);
    const Tensor& out = fr.tape.output();
    const double denom = static_cast<double>(B * n);

    LossResult res;
    res.per_example.assign(B, 0.0);
    Tensor grad({B * n, 1});
    double total = 0.0;
    for (std::size_t r = 0; r < B * n; ++r) {
        const std::size_t b = r % B;
        const double d = out[r] - targets[b];
        res.per_example[b] += d * d / static_cast<double>(n);
        total += d * d;
        grad[r] = 2.0 * d / denom;
    }
    res.loss = total / denom;
    if (with_grad)
        res.grads = backward(fr.tape, model.params, grad);
    return res;
}

LossResult weighted_loss_Lq(const LatentModel& model, const Tensor& x, std::span<const int> labels,
                            std::span<const double> weights, std::size_t n_mask_samples, Rng& rng,
                            bool with_grad)
{
    const auto w = checked_weights(weights, labels.size());
    return classification_loss(model, x, labels, w, n_mask_samples, rng, with_grad);
}

LossResult student_loss_co(const LatentModel& model, const TeacherScores& teacher, const Tensor& x,
                           std::span<const int> labels, std::size_t n_mask_samples, Rng& rng,
                           bool with_grad)
{
    if (teacher.scores.size() != labels.size())
        throw UsageError("teacher scores missing: got " + std::to_string(teacher.scores.size()) +
                         " for " + std::to_string(labels.size()) + " examples");
    for (double q : teacher.scores) {
        if (std::isnan(q))
            throw UsageError("teacher score missing for an example");
        if (!(q > 0.0 && q <= 1.0))
            throw DomainError("teacher scores must lie in (0, 1]");
    }
    return classification_loss(model, x, labels, teacher.scores, n_mask_samples, rng, with_grad);
}

// ---------------------------------------------------------------------------

namespace {

Tensor finish(const LatentModel& m, const Tensor& out)
{
    return m.task == Task::classification ? softmax_rows(out) : out;
}

Tensor squeeze_if(const Tensor& t, bool squeeze)
{
    if (!squeeze)
        return t;
    return Tensor({t.cols()}, std::vector<double>(t.values().begin(), t.values().end()));
}

} // namespace

Tensor predict(const LatentModel& model, const Tensor& x_in, const PredictMode& mode)
{
    model.validate();
    const bool squeeze = x_in.rank() == 1;
    const Tensor x = as_batch(x_in);

    if (const auto* mc = std::get_if<McAverage>(&mode)) {
        if (mc->samples < 1)
            throw DomainError("mc_average needs at least one sample");
        Rng rng(mc->seed);
        Tensor acc;
        for (std::size_t s = 0; s < mc->samples; ++s) {
            Tensor p = finish(model, masked_forward(model, x, 1, rng).output);
            if (acc.empty()) {
                acc = std::move(p);
                continue;
            }
            auto av = acc.values();
            auto pv = p.values();
            for (std::size_t i = 0; i < av.size(); ++i)
                av[i] += pv[i];
        }
        for (double& v : acc.values())
            v /= static_cast<double>(mc->samples);
        return squeeze_if(acc, squeeze);
    }
    if (const auto* tr = std::get_if<Truncate>(&mode)) {
        const std::size_t K = model.channels();
        if (tr->k < 1 || tr->k > K)
            throw DomainError("truncation point must lie in 1.." + std::to_string(K));
        const masks::Mask m = masks::Mask::prefix(K, tr->k);
        return squeeze_if(finish(model, forward(model.spec, model.params, x, {&m, 1}, model.mask_layer).output),
                          squeeze);
    }
    if (!masked(model))
        return squeeze_if(finish(model, forward(model.spec, model.params, x).output), squeeze);
    const auto e = masks::expected_mask(model.mask);
    const Tensor scale({e.size()}, e);
    return squeeze_if(finish(model, forward_scaled(model.spec, model.params, x, scale, model.mask_layer).output),
                      squeeze);
}

PredictMode deterministic_mode(const LatentModel& model)
{
    if (std::holds_alternative<masks::DropoutSpec>(model.mask))
        return ExpectedMask{};
    return Truncate{model.channels()};
}

Tensor deterministic_predict(const LatentModel& model, const Tensor& x)
{
    return predict(model, x, deterministic_mode(model));
}

// ---------------------------------------------------------------------------

std::vector<double> EnumerableProblem::p_label_given_x(std::size_t x) const
{
    std::vector<double> p(labels, 0.0);
    for (std::size_t e = 0; e < noises; ++e)
        for (std::size_t y = 0; y < labels; ++y)
            p[y] += p_noise[e] * p_label(x, e, y);
    return p;
}

namespace {

void check_distribution(std::span<const double> p, const char* what)
{
    double s = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < 0.0)
            throw DomainError(std::string(what) + " has a negative or non-finite entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw DomainError(std::string(what) + " does not sum to one");
}

} // namespace

void EnumerableProblem::validate() const
{
    if (inputs == 0 || noises == 0 || labels == 0 || masks == 0)
        throw DomainError("enumerable problem needs non-empty input, noise, label and mask sets");
    if (p_x.size() != inputs || p_noise.size() != noises || mask_probs.size() != masks ||
        label_table.size() != inputs * noises * labels || decoder.size() != inputs * masks * labels)
        throw DimensionError("enumerable problem table sizes are inconsistent");
    check_distribution(p_x, "p(x)");
    check_distribution(p_noise, "p(eps)");
    check_distribution(mask_probs, "P_M");
    for (std::size_t r = 0; r < inputs * noises; ++r)
        check_distribution({label_table.data() + r * labels, labels}, "p(y|x,eps)");
    for (std::size_t r = 0; r < inputs * masks; ++r) {
        std::span<const double> row{decoder.data() + r * labels, labels};
        check_distribution(row, "q(y|z)");
        for (double v : row)
            if (!(v > 0.0))
                throw DomainError("decoder probabilities must be strictly positive");
    }
}

std::vector<double> tilde_q_unnormalized(const EnumerableProblem& pr, std::size_t x)
{
    std::vector<double> out(pr.labels, 0.0);
    for (std::size_t y = 0; y < pr.labels; ++y) {
        double s = 0.0;
        for (std::size_t m = 0; m < pr.masks; ++m)
            if (pr.mask_probs[m] > 0.0)
                s += pr.mask_probs[m] * std::log(pr.q(x, m, y));
        out[y] = std::exp(s);
    }
    return out;
}

std::vector<double> tilde_q(const EnumerableProblem& pr, std::size_t x)
{
    for (std::size_t m = 0; m < pr.masks; ++m)
        if (pr.mask_probs[m] == 1.0) {
            std::vector<double> row(pr.labels);
            for (std::size_t y = 0; y < pr.labels; ++y)
                row[y] = pr.q(x, m, y);
            return row;
        }
    auto u = tilde_q_unnormalized(pr, x);
    const double z = std::accumulate(u.begin(), u.end(), 0.0);
    for (double& v : u)
        v /= z;
    return u;
}

std::vector<double> mixture_q(const EnumerableProblem& pr, std::size_t x)
{
    std::vector<double> out(pr.labels, 0.0);
    for (std::size_t m = 0; m < pr.masks; ++m)
        for (std::size_t y = 0; y < pr.labels; ++y)
            out[y] += pr.mask_probs[m] * pr.q(x, m, y);
    return out;
}

double exact_Lq(const EnumerableProblem& pr, std::size_t x, std::size_t y)
{
    double s = 0.0;
    for (std::size_t m = 0; m < pr.masks; ++m)
        if (pr.mask_probs[m] > 0.0)
            s -= pr.mask_probs[m] * std::log(pr.q(x, m, y));
    return s;
}

} // namespace nestco::lvm
