#include "sentinel/losses.hpp"

#include <stdexcept>

namespace sentinel {

ClassWeights ClassWeights::uniform(int num_classes) {
    ClassWeights w;
    w.weights.assign(static_cast<std::size_t>(num_classes), 1.0);
    return w;
}

double ClassWeights::mean_of(std::span<const int> labels) const {
    if (labels.empty()) return 1.0;
    double s = 0.0;
    for (int y : labels) s += weights.at(static_cast<std::size_t>(y));
    return s / static_cast<double>(labels.size());
}

ClassWeights compute_class_weights(std::span<const long> counts, double beta, double clamp_lo, double clamp_hi) {
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("compute_class_weights: beta must lie in [0,1)");
    ClassWeights w;
    w.beta = beta;
    w.clamp_lo = clamp_lo;
    w.clamp_hi = clamp_hi;
    w.weights.assign(counts.size(), 1.0);

    double sum = 0.0;
    long present = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] < 0) throw std::invalid_argument("compute_class_weights: negative count");
        if (counts[c] == 0) continue;
        const double raw = (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(counts[c])));
        w.weights[c] = std::clamp(raw, clamp_lo, clamp_hi);
        sum += w.weights[c];
        ++present;
    }
    if (present == 0) throw std::invalid_argument("compute_class_weights: all class counts are zero");
    const double mean = sum / static_cast<double>(present);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) w.weights[c] /= mean;
    }
    return w;
}

double temperature(double round, const KdSchedule& s) {
    if (round < 0) throw std::invalid_argument("temperature: round must be >= 0");
    return std::max(s.t_min, s.t_base * std::pow(s.t_decay, std::min(round / 10.0, 5.0)));
}

AdaptiveWeights update_adaptive_weights(const AdaptiveWeights& st, double gamma, double score_align, int round) {
    const double alpha = AdaptiveWeights::ema_alpha(round);
    AdaptiveWeights out = st;
    out.round = round;
    out.lambda_kd = std::clamp(alpha * st.lambda_kd + (1.0 - alpha) * (1.0 - gamma), AdaptiveWeights::kKdLower,
                               AdaptiveWeights::kd_upper(round));
    out.lambda_align = std::clamp(alpha * st.lambda_align + (1.0 - alpha) * (1.0 - score_align),
                                  AdaptiveWeights::kAlignLower, AdaptiveWeights::align_upper(round));
    return out;
}

}  // namespace sentinel
