#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace sefusion {

/// Binary confusion counts; the positive class is label 1 (Monkeypox).
struct ConfusionMatrix {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    void add(int actual, int predicted) {
        if (actual == 1) {
            predicted == 1 ? ++tp : ++fn;
        } else {
            predicted == 1 ? ++fp : ++tn;
        }
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix tally(std::span<const int> actual, std::span<const int> predicted) {
    if (actual.size() != predicted.size()) throw std::invalid_argument("tally: label/prediction count mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < actual.size(); ++i) cm.add(actual[i], predicted[i]);
    return cm;
}

/// Fractions in [0, 1]. A zero denominator yields 0 and sets `degenerate`.
struct MetricSet {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    bool degenerate = false;
};

inline MetricSet metrics(const ConfusionMatrix& cm) {
    MetricSet m;
    const double tp = static_cast<double>(cm.tp);
    auto ratio = [&m](double num, double den) {
        if (den == 0.0) {
            m.degenerate = true;
            return 0.0;
        }
        return num / den;
    };
    m.accuracy = ratio(tp + static_cast<double>(cm.tn), static_cast<double>(cm.total()));
    m.precision = ratio(tp, tp + static_cast<double>(cm.fp));
    m.recall = ratio(tp, tp + static_cast<double>(cm.fn));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

/// One per-fold report row, in percent.
struct MetricRow {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    bool operator==(const MetricRow&) const = default;
};

inline MetricRow to_percent(const MetricSet& m) {
    return {100.0 * m.accuracy, 100.0 * m.precision, 100.0 * m.recall, 100.0 * m.f1};
}

/// Arithmetic mean of each metric over folds. Values are summed in sorted
/// order so the result is bit-identical under any fold ordering.
inline MetricRow mean_row(std::span<const MetricRow> rows) {
    if (rows.empty()) throw std::invalid_argument("mean_row: no folds");
    auto mean_of = [&](double MetricRow::*field) {
        std::vector<double> values;
        for (const auto& r : rows) values.push_back(r.*field);
        std::sort(values.begin(), values.end());
        double sum = 0;
        for (double v : values) sum += v;
        return sum / static_cast<double>(values.size());
    };
    return {mean_of(&MetricRow::accuracy), mean_of(&MetricRow::precision), mean_of(&MetricRow::recall),
            mean_of(&MetricRow::f1)};
}

}  // namespace sefusion
