#pragma once

#include <string>

#include <Eigen/Dense>

#include "sentinel/errors.hpp"

namespace sentinel {

// Dense row-major carriers. A batch of B samples with d features is a B x d
// matrix; a bias is a 1 x d row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXr = Matrix<double>;
using RowVectorXr = RowVector<double>;
using VectorXr = Vector<double>;

// A trainable tensor with its accumulated gradient.
template <typename Scalar>
struct ParamTensor {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;

    ParamTensor() = default;
    explicit ParamTensor(Matrix<Scalar> v) : value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
    Eigen::Index size() const { return value.size(); }
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
    return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
}

template <typename Derived>
std::string shape_str(const Eigen::MatrixBase<Derived>& m) {
    return shape_str(m.rows(), m.cols());
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* op, const char* axis) {
    if (got != want) {
        throw DimensionError(std::string(op) + ": " + axis + " is " + std::to_string(got) + ", expected " +
                             std::to_string(want));
    }
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

}  // namespace sentinel
