#pragma once

#include <cmath>
#include <initializer_list>

#include "doctest.h"

#include "sentinel/tensor.hpp"

namespace testutil {

inline sentinel::MatrixXr mat(std::initializer_list<std::initializer_list<double>> rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r ? static_cast<Eigen::Index>(rows.begin()->size()) : 0;
    sentinel::MatrixXr m(r, c);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

inline double max_abs_diff(const sentinel::MatrixXr& a, const sentinel::MatrixXr& b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace testutil

#define CHECK_NEAR(a, b, tol) CHECK(std::abs(static_cast<double>(a) - static_cast<double>(b)) <= (tol))
