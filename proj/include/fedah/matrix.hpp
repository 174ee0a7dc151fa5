#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedah/error.hpp"

namespace fedah {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw_shape("matrix data length " + std::to_string(data_.size()) + " != " +
                        std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out = a * b. `out` is resized.
inline void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.rows()) {
        throw_shape("matmul " + a.shape_str() + " * " + b.shape_str());
    }
    out = Matrix(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        auto lhs = a.row(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const double s = lhs[k];
            if (s == 0.0) continue;
            auto rhs = b.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * rhs[j];
        }
    }
}

/// out = a^T * b, i.e. sum over rows of outer products. `out` is resized.
inline void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows() != b.rows()) {
        throw_shape("matmul_tn " + a.shape_str() + "^T * " + b.shape_str());
    }
    out = Matrix(a.cols(), b.cols());
    for (std::size_t n = 0; n < a.rows(); ++n) {
        auto lhs = a.row(n);
        auto rhs = b.row(n);
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            const double s = lhs[i];
            if (s == 0.0) continue;
            auto dst = out.row(i);
            for (std::size_t j = 0; j < rhs.size(); ++j) dst[j] += s * rhs[j];
        }
    }
}

/// out = a * b^T. `out` is resized.
inline void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.cols()) {
        throw_shape("matmul_nt " + a.shape_str() + " * " + b.shape_str() + "^T");
    }
    out = Matrix(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto lhs = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto rhs = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < lhs.size(); ++k) acc += lhs[k] * rhs[k];
            out(i, j) = acc;
        }
    }
}

}  // namespace fedah
