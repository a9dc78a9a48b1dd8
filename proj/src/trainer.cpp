#include "nestco/trainer.hpp"

#include "nestco/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace nestco::train {

using lvm::LatentModel;
using noise::NoisyDataset;

void StageOneConfig::validate() const
{
    if (epochs > 0 && batch_size < 1)
        throw DomainError("batch_size must be at least 1");
    if (n_mask_samples < 1)
        throw DomainError("n_mask_samples must be at least 1");
    lr.validate();
}

void CoTeachConfig::validate() const
{
    if (!(lambda_forget >= 0.0 && lambda_forget < 1.0))
        throw DomainError("lambda_forget must lie in [0, 1)");
    if (epochs > 0 && batch_size < 2)
        throw DomainError("co-teaching needs batches of at least two examples");
    if (n_mask_samples < 1)
        throw DomainError("n_mask_samples must be at least 1");
    lr.validate();
}

double accuracy(const Tensor& probs, std::span<const int> labels)
{
    if (labels.empty())
        return not_measured;
    const std::size_t R = probs.rank() == 1 ? 1 : probs.rows();
    if (R != labels.size())
        throw DimensionError("prediction rows do not match label count");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < R; ++r) {
        const auto row = probs.row(r);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        hits += best == labels[r];
    }
    return static_cast<double>(hits) / static_cast<double>(R);
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(noise::LabeledData test, std::optional<noise::LabeledData> validation)
    : test_(std::move(test)), validation_(std::move(validation))
{
}

std::size_t Evaluator::kstar(const LatentModel& m) const
{
    if (!validation_ || !masks::is_nested(m.mask))
        return 0;
    return select_kstar(m, *validation_);
}

lvm::PredictMode Evaluator::inference_mode(const LatentModel& m) const
{
    const std::size_t k = kstar(m);
    if (k > 0)
        return lvm::Truncate{k};
    return lvm::deterministic_mode(m);
}

double Evaluator::test_accuracy(const LatentModel& m) const
{
    return test_accuracy(m, inference_mode(m));
}

double Evaluator::test_accuracy(const LatentModel& m, const lvm::PredictMode& mode) const
{
    if (!has_test())
        return not_measured;
    return accuracy(lvm::predict(m, test_.inputs, mode), test_.labels);
}

double Evaluator::test_accuracy(const LatentModel& m1, const LatentModel& m2) const
{
    return test_accuracy(m1, m2, inference_mode(m1), inference_mode(m2));
}

double Evaluator::test_accuracy(const LatentModel& m1, const LatentModel& m2, const lvm::PredictMode& mode1,
                                const lvm::PredictMode& mode2) const
{
    if (!has_test())
        return not_measured;
    return accuracy(ensemble_predict(m1, m2, test_.inputs, mode1, mode2), test_.labels);
}

std::size_t Evaluator::count_clean(const NoisyDataset& data, std::span<const std::size_t> idx)
{
    const auto clean = noise::CleanLabelAccess::clean_labels(data);
    const auto noisy = data.noisy_labels();
    std::size_t n = 0;
    for (std::size_t i : idx)
        n += clean[i] == noisy[i];
    return n;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx)
{
    const std::size_t D = x.cols();
    Tensor out({idx.size(), D});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.row(idx[r]).begin(), D, out.row(r).begin());
    return out;
}

std::vector<int> gather(std::span<const int> v, std::span<const std::size_t> idx)
{
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx)
        out.push_back(v[i]);
    return out;
}

void check_compatible(const LatentModel& m, const NoisyDataset& data)
{
    m.validate();
    if (m.task != lvm::Task::classification)
        throw UsageError("label-noise training needs a classification model");
    if (m.spec.input_width() != data.dim())
        throw DimensionError("model input width does not match the data dimension");
    if (m.classes() != data.classes())
        throw DimensionError("model class count does not match the data");
}

void check_finite(double loss, const char* stage, std::size_t epoch, std::size_t batch)
{
    if (!std::isfinite(loss))
        throw NumericError(std::string(stage) + ": loss diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch));
}

double noisy_accuracy(const LatentModel& m, const NoisyDataset& data, const lvm::PredictMode& mode)
{
    return accuracy(lvm::predict(m, data.inputs(), mode), data.noisy_labels());
}

} // namespace

TrainReport train_stage_one(LatentModel& model, const NoisyDataset& data, const StageOneConfig& cfg,
                            const Evaluator* eval)
{
    cfg.validate();
    check_compatible(model, data);
    TrainReport report;
    if (cfg.epochs == 0 || data.size() == 0)
        return report;

    const Rng root(cfg.seed);
    SgdState state;
    std::size_t iteration = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled(data.size(), root.split({0, epoch}));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        double lr = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batches) {
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(cfg.batch_size, order.size() - start));
            const Tensor x = gather_rows(data.inputs(), idx);
            const auto y = gather(data.noisy_labels(), idx);
            Rng mask_rng = root.split({1, epoch, batches});
            auto res = lvm::loss_Lq(model, x, y, cfg.n_mask_samples, mask_rng);
            check_finite(res.loss, "stage one", epoch, batches);
            lr = lr_at(cfg.lr, ++iteration, epoch);
            sgd_step(model.params, res.grads, lr, cfg.momentum, cfg.weight_decay, state);
            loss_sum += res.loss;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        const auto mode = eval ? eval->inference_mode(model) : lvm::deterministic_mode(model);
        if (const auto* t = std::get_if<lvm::Truncate>(&mode); t && eval && eval->has_validation())
            rec.kstar = t->k;
        rec.noisy_train_accuracy = noisy_accuracy(model, data, mode);
        if (eval)
            rec.clean_test_accuracy = eval->test_accuracy(model, mode);
        report.epochs.push_back(rec);
    }
    return report;
}

std::pair<TrainReport, TrainReport> train_stage_one_pair(LatentModel& m1, LatentModel& m2,
                                                         const NoisyDataset& data, const StageOneConfig& cfg1,
                                                         const StageOneConfig& cfg2, const Evaluator* eval,
                                                         bool concurrent)
{
    if (&m1 == &m2)
        throw UsageError("stage one needs two distinct models");
    std::pair<TrainReport, TrainReport> out;
    if (!concurrent) {
        out.first = train_stage_one(m1, data, cfg1, eval);
        out.second = train_stage_one(m2, data, cfg2, eval);
        return out;
    }
    std::exception_ptr err;
    std::thread worker([&] {
        try {
            out.second = train_stage_one(m2, data, cfg2, eval);
        } catch (...) {
            err = std::current_exception();
        }
    });
    try {
        out.first = train_stage_one(m1, data, cfg1, eval);
    } catch (...) {
        worker.join();
        throw;
    }
    worker.join();
    if (err)
        std::rethrow_exception(err);
    return out;
}

std::vector<std::size_t> select_small_loss(std::span<const double> losses, double lambda_forget)
{
    if (losses.empty())
        throw UsageError("select_small_loss called with no losses");
    if (!(lambda_forget >= 0.0 && lambda_forget < 1.0))
        throw DomainError("lambda_forget must lie in [0, 1)");
    for (double l : losses)
        if (!std::isfinite(l))
            throw NumericError("select_small_loss needs finite losses");
    const double n = static_cast<double>(losses.size());
    // The epsilon keeps e.g. (1 - 0.7) * 10 from rounding up to 4.
    const auto keep = std::min(losses.size(),
                               static_cast<std::size_t>(std::ceil((1.0 - lambda_forget) * n - 1e-9)));
    std::vector<std::size_t> idx(losses.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    idx.resize(std::max<std::size_t>(keep, 1));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> selection_losses(const LatentModel& model, const Tensor& x, std::span<const int> labels)
{
    const Tensor p = lvm::deterministic_predict(model, x);
    if (p.rows() != labels.size())
        throw DimensionError("label count does not match batch");
    std::vector<double> out(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r)
        out[r] = -std::log(std::max(p.at(r, static_cast<std::size_t>(labels[r])), lvm::probability_floor));
    return out;
}

TrainReport coteach_finetune(LatentModel& m1, LatentModel& m2, const NoisyDataset& data,
                             const CoTeachConfig& cfg, const Evaluator* eval)
{
    cfg.validate();
    if (&m1 == &m2)
        throw UsageError("co-teaching needs two distinct models");
    check_compatible(m1, data);
    check_compatible(m2, data);
    if (m1.spec != m2.spec || m1.mask_layer != m2.mask_layer || m1.mask.index() != m2.mask.index())
        throw UsageError("co-teaching models must share architecture and mask family");
    TrainReport report;
    if (cfg.epochs == 0 || data.size() < 2)
        return report;

    const Rng root(cfg.seed);
    SgdState s1, s2;
    const std::size_t frozen = cfg.freeze_encoder ? m1.mask_layer : 0;
    std::size_t iteration = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled(data.size(), root.split({0, epoch}));
        double loss_sum = 0.0;
        std::size_t steps = 0, selected = 0, selected_clean = 0;
        double lr = 0.0;
        for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start) / 2;
            if (len == 0)
                continue;
            const std::span<const std::size_t> half1(order.data() + start, len);
            const std::span<const std::size_t> half2(order.data() + start + len, len);

            auto pick = [&](const LatentModel& m, std::span<const std::size_t> half) {
                const auto y = gather(data.noisy_labels(), half);
                const auto keep = select_small_loss(selection_losses(m, gather_rows(data.inputs(), half), y),
                                                    cfg.lambda_forget);
                std::vector<std::size_t> rows;
                rows.reserve(keep.size());
                for (std::size_t k : keep)
                    rows.push_back(half[k]);
                return rows;
            };
            const auto sel1 = pick(m1, half1); // trained on by m2
            const auto sel2 = pick(m2, half2); // trained on by m1
            if (eval) {
                selected_clean += Evaluator::count_clean(data, sel1) + Evaluator::count_clean(data, sel2);
                selected += sel1.size() + sel2.size();
            }

            lr = lr_at(cfg.lr, ++iteration, epoch);
            auto step = [&](LatentModel& m, SgdState& st, std::span<const std::size_t> rows, std::uint64_t id) {
                Rng mask_rng = root.split({1, epoch, b, id});
                const auto y = gather(data.noisy_labels(), rows);
                auto res = lvm::loss_Lq(m, gather_rows(data.inputs(), rows), y, cfg.n_mask_samples, mask_rng);
                check_finite(res.loss, "co-teaching", epoch, b);
                sgd_step(m.params, res.grads, lr, cfg.momentum, cfg.weight_decay, st, frozen);
                return res.loss;
            };
            loss_sum += 0.5 * (step(m1, s1, sel2, 1) + step(m2, s2, sel1, 2));
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        const auto mode1 = eval ? eval->inference_mode(m1) : lvm::deterministic_mode(m1);
        const auto mode2 = eval ? eval->inference_mode(m2) : lvm::deterministic_mode(m2);
        if (const auto* t = std::get_if<lvm::Truncate>(&mode1); t && eval && eval->has_validation())
            rec.kstar = t->k;
        rec.noisy_train_accuracy =
            accuracy(ensemble_predict(m1, m2, data.inputs(), mode1, mode2), data.noisy_labels());
        if (eval) {
            rec.clean_test_accuracy = eval->test_accuracy(m1, m2, mode1, mode2);
            if (selected > 0)
                rec.selected_clean_fraction = static_cast<double>(selected_clean) / static_cast<double>(selected);
        }
        report.epochs.push_back(rec);
    }
    return report;
}

Tensor ensemble_predict(const LatentModel& m1, const LatentModel& m2, const Tensor& x,
                        const lvm::PredictMode& mode)
{
    return ensemble_predict(m1, m2, x, mode, mode);
}

Tensor ensemble_predict(const LatentModel& m1, const LatentModel& m2, const Tensor& x,
                        const lvm::PredictMode& mode1, const lvm::PredictMode& mode2)
{
    if (m1.spec.input_width() != m2.spec.input_width() || m1.spec.output_width() != m2.spec.output_width() ||
        m1.task != m2.task)
        throw UsageError("ensemble members must share input and output layout");
    Tensor a = lvm::predict(m1, x, mode1);
    const Tensor b = lvm::predict(m2, x, mode2);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i)
        av[i] = 0.5 * (av[i] + bv[i]);
    return a;
}

std::vector<double> truncation_accuracies(const LatentModel& model, const noise::LabeledData& validation)
{
    if (!masks::is_nested(model.mask))
        throw UsageError("truncation sweep needs a Nested Dropout model");
    if (validation.size() == 0)
        throw UsageError("truncation sweep needs a non-empty validation set");
    const std::size_t K = model.channels();
    std::vector<double> acc(K);
    for (std::size_t k = 1; k <= K; ++k)
        acc[k - 1] = accuracy(lvm::predict(model, validation.inputs, lvm::Truncate{k}), validation.labels);
    return acc;
}

std::size_t select_kstar(const LatentModel& model, const noise::LabeledData& validation)
{
    const auto acc = truncation_accuracies(model, validation);
    // max_element returns the first maximum, i.e. the smallest k.
    return static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin()) + 1;
}

std::vector<double> train_regression(LatentModel& model, const Tensor& x, std::span<const double> y,
                                     const RegressionConfig& cfg)
{
    cfg.lr.validate();
    const Rng root(cfg.seed);
    SgdState state;
    std::vector<double> losses;
    losses.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng mask_rng = root.split({1, epoch});
        auto res = lvm::loss_Lq(model, x, y, cfg.n_mask_samples, mask_rng);
        check_finite(res.loss, "regression", epoch, 0);
        sgd_step(model.params, res.grads, lr_at(cfg.lr, epoch + 1, epoch), cfg.momentum, cfg.weight_decay, state);
        losses.push_back(res.loss);
    }
    return losses;
}

} // namespace nestco::train
