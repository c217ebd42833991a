#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "demorl/common.hpp"

namespace demorl {

// Row-major dense matrix of 64-bit reals.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    std::span<double> row(std::size_t i) { return {row_ptr(i), cols}; }
    std::span<const double> row(std::size_t i) const { return {row_ptr(i), cols}; }

    std::size_t size() const { return data.size(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Matrix& o) const {
        return rows == o.rows && cols == o.cols;
    }
};

}  // namespace demorl
