#pragma once

#include <span>
#include <utility>
#include <vector>

namespace sentinel {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<long> counts;  // row-major C x C

    long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth * num_classes + pred)]; }
    long total() const;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, int num_classes);

enum class MacroMode {
    AllClasses,      // average over every class index
    PresentClasses,  // average over classes that occur in y_true
};

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
};

// Zero-denominator classes score 0.
ClassificationReport report(const ConfusionMatrix& cm, MacroMode mode = MacroMode::AllClasses);

// Arithmetic mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace sentinel
