#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/tensor.hpp"

namespace sentinel {

struct AdamWConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename Scalar>
struct AdamWState {
    long step_count = 0;
    Matrix<Scalar> first_moment;
    Matrix<Scalar> second_moment;
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    AdamWState() = default;
    AdamWState(Eigen::Index rows, Eigen::Index cols, const AdamWConfig& cfg)
        : first_moment(Matrix<Scalar>::Zero(rows, cols)),
          second_moment(Matrix<Scalar>::Zero(rows, cols)),
          lr(cfg.lr),
          beta1(cfg.beta1),
          beta2(cfg.beta2),
          eps(cfg.eps),
          weight_decay(cfg.weight_decay) {}
};

// Decoupled weight decay:  value -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * value)
template <typename Scalar>
void adamw_step(ParamTensor<Scalar>& param, AdamWState<Scalar>& state, std::string_view name = "parameter") {
    if (!param.grad.allFinite()) {
        throw NumericError("adamw_step: non-finite gradient in " + std::string(name));
    }
    if (state.first_moment.rows() != param.value.rows() || state.first_moment.cols() != param.value.cols()) {
        state.first_moment = Matrix<Scalar>::Zero(param.value.rows(), param.value.cols());
        state.second_moment = Matrix<Scalar>::Zero(param.value.rows(), param.value.cols());
        state.step_count = 0;
    }
    state.step_count += 1;
    const Scalar b1 = static_cast<Scalar>(state.beta1);
    const Scalar b2 = static_cast<Scalar>(state.beta2);
    state.first_moment = b1 * state.first_moment + (Scalar(1) - b1) * param.grad;
    state.second_moment = b2 * state.second_moment + (Scalar(1) - b2) * param.grad.cwiseProduct(param.grad);

    const Scalar bc1 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta1, static_cast<double>(state.step_count)));
    const Scalar bc2 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta2, static_cast<double>(state.step_count)));
    const Scalar lr = static_cast<Scalar>(state.lr);
    const Scalar eps = static_cast<Scalar>(state.eps);
    const Scalar wd = static_cast<Scalar>(state.weight_decay);

    const auto m_hat = (state.first_moment.array() / bc1);
    const auto v_hat = (state.second_moment.array() / bc2);
    param.value.array() -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * param.value.array());
}

// Scales every gradient by max_norm / (norm + 1e-8) when the global l2 norm
// exceeds max_norm. Returns the applied factor (1 when untouched).
template <typename Scalar>
Scalar clip_grad_norm(std::span<ParamTensor<Scalar>* const> params, Scalar max_norm) {
    Scalar sq = 0;
    for (const auto* p : params) sq += p->grad.squaredNorm();
    const Scalar norm = std::sqrt(sq);
    if (norm <= max_norm) return Scalar(1);
    const Scalar scale = max_norm / (norm + static_cast<Scalar>(1e-8));
    for (auto* p : params) p->grad *= scale;
    return scale;
}

// One AdamW state per parameter, in the order of the parameter list.
template <typename Scalar>
class AdamW {
public:
    AdamW() = default;
    AdamW(std::span<ParamTensor<Scalar>* const> params, const AdamWConfig& cfg) : config_(cfg) {
        states_.reserve(params.size());
        for (const auto* p : params) states_.emplace_back(p->value.rows(), p->value.cols(), cfg);
    }

    void step(std::span<ParamTensor<Scalar>* const> params, std::string_view owner = "model") {
        if (params.size() != states_.size()) {
            throw DimensionError("AdamW::step: " + std::to_string(params.size()) + " parameters, optimizer holds " +
                                 std::to_string(states_.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            adamw_step(*params[i], states_[i], std::string(owner) + "[" + std::to_string(i) + "]");
        }
    }

    void set_lr(double lr) {
        config_.lr = lr;
        for (auto& s : states_) s.lr = lr;
    }
    double lr() const { return config_.lr; }

    const std::vector<AdamWState<Scalar>>& states() const { return states_; }

private:
    AdamWConfig config_;
    std::vector<AdamWState<Scalar>> states_;
};

// Per-epoch exponential decay; factor 1 leaves the rate at its base value.
struct ExponentialLr {
    double base_lr = 0.005;
    double gamma = 1.0;
    long epochs = 0;

    double step() {
        ++epochs;
        return current();
    }
    double current() const { return base_lr * std::pow(gamma, static_cast<double>(epochs)); }
};

}  // namespace sentinel
