#include "sentinel/metrics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sentinel {

long ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, int num_classes) {
    if (y_true.size() != y_pred.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(y_true.size()) + " true labels vs " +
                                    std::to_string(y_pred.size()) + " predictions");
    }
    ConfusionMatrix cm;
    cm.num_classes = num_classes;
    cm.counts.assign(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
            throw std::out_of_range("confusion: label pair (" + std::to_string(t) + "," + std::to_string(p) +
                                    ") at index " + std::to_string(i) + " outside [0," +
                                    std::to_string(num_classes) + ")");
        }
        cm.counts[static_cast<std::size_t>(t * num_classes + p)] += 1;
    }
    return cm;
}

ClassificationReport report(const ConfusionMatrix& cm, MacroMode mode) {
    const int c_n = cm.num_classes;
    ClassificationReport r;
    r.precision.assign(static_cast<std::size_t>(c_n), 0.0);
    r.recall.assign(static_cast<std::size_t>(c_n), 0.0);
    r.f1.assign(static_cast<std::size_t>(c_n), 0.0);
    const long total = cm.total();
    long correct = 0;
    int averaged = 0;
    for (int c = 0; c < c_n; ++c) {
        long tp = cm.at(c, c);
        long col = 0, row = 0;
        for (int k = 0; k < c_n; ++k) {
            col += cm.at(k, c);
            row += cm.at(c, k);
        }
        correct += tp;
        const double p = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        const double rc = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        const double f = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
        const auto ci = static_cast<std::size_t>(c);
        r.precision[ci] = p;
        r.recall[ci] = rc;
        r.f1[ci] = f;
        if (mode == MacroMode::AllClasses || row > 0) {
            r.macro_precision += p;
            r.macro_recall += rc;
            r.macro_f1 += f;
            ++averaged;
        }
    }
    if (averaged > 0) {
        r.macro_precision /= averaged;
        r.macro_recall /= averaged;
        r.macro_f1 /= averaged;
    }
    r.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return r;
}

std::pair<double, double> mean_std(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_std: no values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace sentinel
