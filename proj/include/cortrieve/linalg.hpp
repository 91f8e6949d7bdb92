#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cortrieve {

/// Dense row-major matrix of doubles. Rows are the unit of access everywhere
/// in this library (embeddings are rows; n x n encoders are stored as rows of
/// length n*n).
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> row(size_t i) { return std::span{data_}.subspan(i * cols_, cols_); }
    std::span<const double> row(size_t i) const {
        return std::span{data_}.subspan(i * cols_, cols_);
    }

    double& at(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double at(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are deterministic and identical wherever dot is used on
/// the same operands.
inline double dot(std::span<const double> a, std::span<const double> b) {
    const size_t n = a.size();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double sum_squares(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double sum_squares(const Matrix& m) {
    return sum_squares(std::span<const double>{m.data()});
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

/// Rescales a row in place so its Euclidean norm is at most c.
inline void clamp_norm(std::span<double> row, double c) {
    double n = norm(row);
    if (n > c) {
        double s = c / n;
        for (double& v : row) v *= s;
    }
}

}  // namespace cortrieve
