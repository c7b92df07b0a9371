#pragma once

// Differentiable building blocks for the small MLPs: affine maps, ReLU, the
// softmax family, KL divergence and row normalisation. Every forward has a
// paired backward that returns exact analytic gradients.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sentinel/tensor.hpp"

namespace sentinel {

inline constexpr double kKlFloor = 1e-12;
inline constexpr double kNormEps = 1e-8;

// ---------------------------------------------------------------- affine

template <typename Scalar>
Matrix<Scalar> affine_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& weight, const Matrix<Scalar>& bias) {
    require_dim(x.cols(), weight.rows(), "affine_forward", "axis 1 of x (d_in)");
    require_dim(bias.rows(), 1, "affine_forward", "axis 0 of b");
    require_dim(bias.cols(), weight.cols(), "affine_forward", "axis 0 of b (d_out)");
    Matrix<Scalar> y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
}

template <typename Scalar>
struct AffineGrads {
    Matrix<Scalar> dx;
    Matrix<Scalar> dweight;
    Matrix<Scalar> dbias;
};

template <typename Scalar>
AffineGrads<Scalar> affine_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& weight,
                                    const Matrix<Scalar>& dy) {
    require_dim(dy.rows(), x.rows(), "affine_backward", "axis 0 of dy (batch)");
    require_dim(dy.cols(), weight.cols(), "affine_backward", "axis 1 of dy (d_out)");
    AffineGrads<Scalar> g;
    g.dx = dy * weight.transpose();
    g.dweight = x.transpose() * dy;
    g.dbias = dy.colwise().sum();
    if (dy.rows() == 0) g.dbias = Matrix<Scalar>::Zero(1, weight.cols());
    return g;
}

// ---------------------------------------------------------------- relu

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& x) {
    return x.cwiseMax(Scalar(0));
}

// Subgradient at exactly zero is zero.
template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    if (x.rows() != dy.rows() || x.cols() != dy.cols()) {
        throw DimensionError("relu_backward: dy " + shape_str(dy) + " does not match x " + shape_str(x));
    }
    return (x.array() > Scalar(0)).select(dy, Scalar(0));
}

// ---------------------------------------------------------------- softmax family

template <typename Scalar>
Matrix<Scalar> softmax_with_temperature(const Matrix<Scalar>& z, Scalar temperature) {
    if (!(temperature > Scalar(0))) {
        throw std::invalid_argument("softmax_with_temperature: temperature must be positive, got " +
                                    std::to_string(static_cast<double>(temperature)));
    }
    Matrix<Scalar> p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const Scalar mx = z.row(i).maxCoeff();
        p.row(i) = ((z.row(i).array() - mx) / temperature).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

template <typename Scalar>
Matrix<Scalar> log_softmax_with_temperature(const Matrix<Scalar>& z, Scalar temperature) {
    if (!(temperature > Scalar(0))) {
        throw std::invalid_argument("log_softmax_with_temperature: temperature must be positive");
    }
    Matrix<Scalar> out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const Scalar mx = z.row(i).maxCoeff();
        auto shifted = ((z.row(i).array() - mx) / temperature).eval();
        out.row(i) = (shifted - std::log(shifted.exp().sum())).matrix();
    }
    return out;
}

// Given p = softmax(z / T) and dL/dp, returns dL/dz.
template <typename Scalar>
Matrix<Scalar> softmax_backward(const Matrix<Scalar>& p, const Matrix<Scalar>& dp, Scalar temperature) {
    if (p.rows() != dp.rows() || p.cols() != dp.cols()) {
        throw DimensionError("softmax_backward: dp " + shape_str(dp) + " does not match p " + shape_str(p));
    }
    Matrix<Scalar> dz(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const Scalar inner = p.row(i).dot(dp.row(i));
        dz.row(i) = (p.row(i).array() * (dp.row(i).array() - inner)).matrix() / temperature;
    }
    return dz;
}

template <typename Scalar>
struct LossAndGrad {
    Scalar value{};
    Matrix<Scalar> grad;
};

inline void check_labels(std::span<const int> labels, Eigen::Index num_classes, const char* op) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw std::out_of_range(std::string(op) + ": label " + std::to_string(labels[i]) + " at row " +
                                    std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
        }
    }
}

// loss = (1/B) * sum_i w[y_i] * (-log softmax(z_i)[y_i])
template <typename Scalar>
LossAndGrad<Scalar> weighted_cross_entropy(const Matrix<Scalar>& z, std::span<const int> labels,
                                           std::span<const double> class_weights) {
    require_dim(static_cast<Eigen::Index>(labels.size()), z.rows(), "weighted_cross_entropy", "axis 0 (batch)");
    require_dim(static_cast<Eigen::Index>(class_weights.size()), z.cols(), "weighted_cross_entropy",
                "axis 1 (classes)");
    check_labels(labels, z.cols(), "weighted_cross_entropy");

    LossAndGrad<Scalar> out;
    out.grad = Matrix<Scalar>::Zero(z.rows(), z.cols());
    if (z.rows() == 0) return out;

    const Matrix<Scalar> logp = log_softmax_with_temperature<Scalar>(z, Scalar(1));
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(z.rows());
    Scalar total = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const Scalar w = static_cast<Scalar>(class_weights[static_cast<std::size_t>(y)]);
        total += -w * logp(i, y);
        out.grad.row(i) = logp.row(i).array().exp().matrix() * (w * inv_b);
        out.grad(i, y) -= w * inv_b;
    }
    out.value = total * inv_b;
    return out;
}

// ---------------------------------------------------------------- KL divergence

template <typename Scalar>
void check_probability_rows(const Matrix<Scalar>& p, const char* op, const char* which) {
    if ((p.array() < Scalar(0)).any()) {
        throw std::invalid_argument(std::string(op) + ": " + which + " has negative entries");
    }
}

// (1/B) * sum_i sum_c p log(p / max(q, 1e-12)), with 0 log 0 = 0.
template <typename Scalar>
Scalar kl_divergence(const Matrix<Scalar>& p, const Matrix<Scalar>& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) {
        throw DimensionError("kl_divergence: p " + shape_str(p) + " vs q " + shape_str(q));
    }
    check_probability_rows(p, "kl_divergence", "p");
    check_probability_rows(q, "kl_divergence", "q");
    if (p.rows() == 0) return Scalar(0);
    const Scalar floor = static_cast<Scalar>(kKlFloor);
    Scalar total = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const Scalar pc = p(i, c);
            if (pc > Scalar(0)) total += pc * std::log(pc / std::max(q(i, c), floor));
        }
    }
    return total / static_cast<Scalar>(p.rows());
}

// Derivative of the batch-mean KL with respect to its first argument, the
// second argument held constant.
template <typename Scalar>
Matrix<Scalar> kl_divergence_grad_first(const Matrix<Scalar>& p, const Matrix<Scalar>& q) {
    const Scalar floor = static_cast<Scalar>(kKlFloor);
    const Scalar inv_b = p.rows() > 0 ? Scalar(1) / static_cast<Scalar>(p.rows()) : Scalar(0);
    Matrix<Scalar> g(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            g(i, c) = (std::log(std::max(p(i, c), floor) / std::max(q(i, c), floor)) + Scalar(1)) * inv_b;
        }
    }
    return g;
}

// ---------------------------------------------------------------- row normalisation

template <typename Scalar>
Matrix<Scalar> l2_normalize_rows(const Matrix<Scalar>& x) {
    Matrix<Scalar> out(x.rows(), x.cols());
    const Scalar eps = static_cast<Scalar>(kNormEps);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(i) / (x.row(i).norm() + eps);
    return out;
}

// u = x / (|x| + eps):  dx = du / (n + eps) - x (x . du) / (n (n + eps)^2)
template <typename Scalar>
Matrix<Scalar> l2_normalize_rows_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& du) {
    if (x.rows() != du.rows() || x.cols() != du.cols()) {
        throw DimensionError("l2_normalize_rows_backward: du " + shape_str(du) + " vs x " + shape_str(x));
    }
    const Scalar eps = static_cast<Scalar>(kNormEps);
    Matrix<Scalar> dx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Scalar n = x.row(i).norm();
        const Scalar d = n + eps;
        dx.row(i) = du.row(i) / d;
        if (n > Scalar(0)) dx.row(i) -= x.row(i) * (x.row(i).dot(du.row(i)) / (n * d * d));
    }
    return dx;
}

// Lowest index wins ties.
template <typename Scalar>
std::vector<int> row_argmax(const Matrix<Scalar>& z) {
    std::vector<int> idx(static_cast<std::size_t>(z.rows()), 0);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c) {
            if (z(i, c) > z(i, best)) best = c;
        }
        idx[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return idx;
}

}  // namespace sentinel
