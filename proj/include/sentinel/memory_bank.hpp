#pragma once

#include <string>

#include "sentinel/tensor.hpp"

namespace sentinel {

// Fixed-capacity FIFO of detached feature rows. The first non-empty push
// fixes the row width.
template <typename Scalar>
class MemoryBank {
public:
    explicit MemoryBank(Eigen::Index capacity = 1024) : capacity_(capacity) {}

    void push(const Matrix<Scalar>& rows) {
        if (rows.rows() == 0) return;
        if (width_ == 0) {
            width_ = rows.cols();
            ring_ = Matrix<Scalar>::Zero(capacity_, width_);
        } else if (rows.cols() != width_) {
            throw DimensionError("MemoryBank::push: row width " + std::to_string(rows.cols()) + ", bank width " +
                                 std::to_string(width_));
        }
        if (capacity_ == 0) return;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            ring_.row(cursor_) = rows.row(i);
            cursor_ = (cursor_ + 1) % capacity_;
            if (count_ < capacity_) ++count_;
        }
    }

    // Stored rows, oldest first.
    Matrix<Scalar> rows() const {
        Matrix<Scalar> out(count_, width_);
        const Eigen::Index start = count_ < capacity_ ? 0 : cursor_;
        for (Eigen::Index k = 0; k < count_; ++k) out.row(k) = ring_.row((start + k) % capacity_);
        return out;
    }

    Eigen::Index size() const { return count_; }
    Eigen::Index capacity() const { return capacity_; }
    Eigen::Index width() const { return width_; }
    bool empty() const { return count_ == 0; }

private:
    Eigen::Index capacity_;
    Eigen::Index width_ = 0;
    Eigen::Index count_ = 0;
    Eigen::Index cursor_ = 0;
    Matrix<Scalar> ring_;
};

}  // namespace sentinel
