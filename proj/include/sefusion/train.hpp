#pragma once

#include <functional>
#include <optional>
#include <tuple>

#include "sefusion/dataset.hpp"
#include "sefusion/metrics.hpp"
#include "sefusion/model.hpp"
#include "sefusion/optim.hpp"

namespace sefusion {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-epoch curve point. Accuracies are fractions in [0, 1].
struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0, val_loss = 0, train_acc = 0, val_acc = 0;
};

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    AdamOptions adam;
    std::uint64_t seed = 0;
    /// Observer called after every epoch; does not influence training.
    std::function<void(const EpochStats&, FusionModel<float>&)> on_epoch;
};

/// Seeds derived from one master seed.
inline std::uint64_t fold_seed(std::uint64_t master, std::size_t fold) { return master + fold; }
inline std::uint64_t grid_point_seed(std::uint64_t master, std::size_t point) { return master + 1000 + point; }

namespace detail {

inline Tensor<float> label_tensor(std::span<const int> labels) {
    const std::size_t n = labels.size();
    return Tensor<float>({n}, std::vector<float>(labels.begin(), labels.end()));
}

/// Splits a permutation into batches; a trailing batch of one joins its predecessor.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    if (batches.size() >= 2 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

}  // namespace detail

/// Inference-mode probabilities for a whole set, in batches.
inline std::vector<float> predict_probabilities(FusionModel<float>& model, const ImageSet& set,
                                                std::size_t batch_size = 32) {
    NoGradGuard guard;
    std::vector<float> probs;
    probs.reserve(set.size());
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        rows.clear();
        for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) rows.push_back(i);
        const Tensor<float> p = model.forward(gather_rows(set.images, rows), Mode::inference);
        probs.insert(probs.end(), p.data().begin(), p.data().end());
    }
    return probs;
}

/// Inference-mode predictions at the 0.5 threshold, tallied against the labels.
inline ConfusionMatrix evaluate(FusionModel<float>& model, const ImageSet& set, std::size_t batch_size = 32) {
    if (set.size() == 0) throw TrainingError("evaluate: empty dataset");
    const auto probs = predict_probabilities(model, set, batch_size);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < probs.size(); ++i) cm.add(set.labels[i], label_for(probs[i]));
    return cm;
}

namespace detail {

inline std::pair<double, double> loss_and_accuracy(FusionModel<float>& model, const ImageSet& set,
                                                   std::size_t batch_size) {
    const auto probs = predict_probabilities(model, set, batch_size);
    NoGradGuard guard;
    const Tensor<float> p({probs.size()}, probs);
    const double loss = bce_loss(label_tensor(set.labels), p).item();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) correct += label_for(probs[i]) == set.labels[i];
    return {loss, static_cast<double>(correct) / static_cast<double>(probs.size())};
}

}  // namespace detail

/**
 * Mini-batch Adam on binary cross-entropy. Each epoch reshuffles the
 * training set; train loss/accuracy are averaged over the epoch's
 * training-mode batches, validation figures use inference mode. The model
 * is left at its last-epoch state.
 */
inline std::vector<EpochStats> train(FusionModel<float>& model, const ImageSet& train_set, const ImageSet& val_set,
                                     const TrainOptions& opts) {
    if (train_set.size() == 0 || val_set.size() == 0) throw TrainingError("train: empty training or validation set");
    for (const auto* set : {&train_set, &val_set})
        for (int y : set->labels)
            if (y != 0 && y != 1) throw TrainingError("train: labels must be 0 or 1");
    if (opts.batch_size == 0) throw TrainingError("train: batch size must be positive");

    Adam<float> adam(model.trainable_parameters(), opts.adam);
    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<EpochStats> curves;

    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t correct = 0;
        for (const auto& rows : detail::make_batches(order, opts.batch_size)) {
            adam.zero_grad();
            const ImageSet batch = subset(train_set, rows);
            const Tensor<float> probs = model.forward(batch.images, Mode::training);
            const Tensor<float> loss = bce_loss(detail::label_tensor(batch.labels), probs);
            if (!std::isfinite(loss.item()))
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch));
            if (loss.requires_grad()) {
                loss.backward();
                adam.step();
            }
            loss_sum += static_cast<double>(loss.item()) * static_cast<double>(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) correct += label_for(probs[i]) == batch.labels[i];
        }
        adam.zero_grad();
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(train_set.size());
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        std::tie(stats.val_loss, stats.val_acc) = detail::loss_and_accuracy(model, val_set, opts.batch_size);
        curves.push_back(stats);
        if (opts.on_epoch) opts.on_epoch(stats, model);
    }
    return curves;
}

struct FoldReport {
    std::size_t fold = 0;  // 1-based, as printed
    MetricRow validation;
    ConfusionMatrix confusion;
    std::vector<EpochStats> curves;
    std::optional<MetricRow> test;
    std::optional<ConfusionMatrix> test_confusion;
};

struct CvResult {
    std::vector<FoldReport> folds;
    MetricRow mean;
    std::optional<MetricRow> test_mean;
};

/// Optional hook receiving each fold's trained model (checkpointing).
using FoldModelSink = std::function<void(std::size_t fold, FusionModel<float>&)>;

/**
 * Trains a fresh model per fold (seed master + fold index) on the other
 * k-1 folds, scores it on its own fold and, when given, on the held-out
 * test rows. `images` is indexed like the DatasetIndex the plan refers to.
 */
inline CvResult kfold_cv(const FusionModelConfig& cfg, const FoldPlan& plan, const ImageSet& images,
                         std::span<const std::size_t> test_rows, const TrainOptions& opts,
                         const FoldModelSink& sink = {}) {
    if (plan.folds.size() < 2) throw TrainingError("kfold_cv: fold plan needs at least two folds");
    CvResult result;
    const std::optional<ImageSet> test = test_rows.empty() ? std::nullopt : std::optional(subset(images, test_rows));
    std::vector<MetricRow> rows, test_rows_metrics;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        try {
            FusionModelConfig fold_cfg = cfg;
            fold_cfg.seed = fold_seed(cfg.seed, f);
            TrainOptions fold_opts = opts;
            fold_opts.seed = fold_seed(opts.seed, f);
            FusionModel<float> model(fold_cfg);
            const ImageSet train_set = subset(images, plan.training_indices(f));
            const ImageSet val_set = subset(images, plan.folds[f]);
            FoldReport report;
            report.fold = f + 1;
            report.curves = train(model, train_set, val_set, fold_opts);
            report.confusion = evaluate(model, val_set, opts.batch_size);
            report.validation = to_percent(metrics(report.confusion));
            if (test) {
                report.test_confusion = evaluate(model, *test, opts.batch_size);
                report.test = to_percent(metrics(*report.test_confusion));
                test_rows_metrics.push_back(*report.test);
            }
            if (sink) sink(f, model);
            rows.push_back(report.validation);
            result.folds.push_back(std::move(report));
        } catch (const std::exception& e) {
            throw TrainingError("fold " + std::to_string(f + 1) + ": " + e.what());
        }
    }
    result.mean = mean_row(rows);
    if (!test_rows_metrics.empty()) result.test_mean = mean_row(test_rows_metrics);
    return result;
}

/// Admissible values for each dense-block hyperparameter.
struct GridSpec {
    std::vector<std::size_t> dense1_units{32, 64, 128, 256};
    std::vector<double> dense1_dropout{0.1, 0.2};
    std::vector<std::size_t> dense2_units{32, 64, 128, 256};
    std::vector<double> dense2_dropout{0.1, 0.2};

    std::size_t size() const {
        return dense1_units.size() * dense1_dropout.size() * dense2_units.size() * dense2_dropout.size();
    }
};

struct GridPoint {
    std::size_t index = 0;  // enumeration order, used for seeding
    std::size_t dense1_units = 0;
    double dense1_dropout = 0;
    std::size_t dense2_units = 0;
    double dense2_dropout = 0;
    MetricRow validation;

    auto config_key() const { return std::tie(dense1_units, dense1_dropout, dense2_units, dense2_dropout); }
};

inline void validate_grid(const GridSpec& grid) {
    static const std::vector<std::size_t> units{32, 64, 128, 256};
    static const std::vector<double> rates{0.1, 0.2};
    auto check = [](const auto& values, const auto& allowed, const char* name) {
        if (values.empty()) throw ConfigError(std::string("grid: ") + name + " is empty");
        for (auto v : values)
            if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
                throw ConfigError(std::string("grid: ") + name + " value outside the admissible set");
    };
    check(grid.dense1_units, units, "dense1_units");
    check(grid.dense2_units, units, "dense2_units");
    check(grid.dense1_dropout, rates, "dense1_dropout");
    check(grid.dense2_dropout, rates, "dense2_dropout");
}

/// Scores one grid configuration; returns validation metrics in percent.
using GridEvaluator = std::function<MetricRow(const FusionModelConfig&, std::size_t point_index)>;

/**
 * Evaluates every grid point and ranks by validation accuracy, then F1,
 * then ascending (dense1_units, dense1_dropout, dense2_units, dense2_dropout).
 */
inline std::vector<GridPoint> grid_search(const FusionModelConfig& base, GridSpec grid, const GridEvaluator& evaluate_point) {
    validate_grid(grid);
    auto sorted_unique = [](auto& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    sorted_unique(grid.dense1_units);
    sorted_unique(grid.dense1_dropout);
    sorted_unique(grid.dense2_units);
    sorted_unique(grid.dense2_dropout);

    std::vector<GridPoint> points;
    for (auto u1 : grid.dense1_units)
        for (auto d1 : grid.dense1_dropout)
            for (auto u2 : grid.dense2_units)
                for (auto d2 : grid.dense2_dropout) {
                    GridPoint p;
                    p.index = points.size();
                    p.dense1_units = u1;
                    p.dense1_dropout = d1;
                    p.dense2_units = u2;
                    p.dense2_dropout = d2;
                    FusionModelConfig cfg = base;
                    cfg.dense1_units = u1;
                    cfg.dense1_dropout = d1;
                    cfg.dense2_units = u2;
                    cfg.dense2_dropout = d2;
                    cfg.seed = grid_point_seed(base.seed, p.index);
                    try {
                        p.validation = evaluate_point(cfg, p.index);
                    } catch (const std::exception& e) {
                        throw TrainingError("grid point " + std::to_string(p.index) + " (" + std::to_string(u1) + "/" +
                                            std::to_string(d1) + ", " + std::to_string(u2) + "/" + std::to_string(d2) +
                                            "): " + e.what());
                    }
                    points.push_back(p);
                }
    std::sort(points.begin(), points.end(), [](const GridPoint& a, const GridPoint& b) {
        if (a.validation.accuracy != b.validation.accuracy) return a.validation.accuracy > b.validation.accuracy;
        if (a.validation.f1 != b.validation.f1) return a.validation.f1 > b.validation.f1;
        return a.config_key() < b.config_key();
    });
    return points;
}

/// Grid evaluator that trains on `train_set` and scores on `val_set`.
inline GridEvaluator split_evaluator(const ImageSet& train_set, const ImageSet& val_set, TrainOptions opts) {
    return [&train_set, &val_set, opts](const FusionModelConfig& cfg, std::size_t) {
        FusionModel<float> model(cfg);
        TrainOptions o = opts;
        o.seed = cfg.seed;
        train(model, train_set, val_set, o);
        return to_percent(metrics(evaluate(model, val_set, o.batch_size)));
    };
}

}  // namespace sefusion
