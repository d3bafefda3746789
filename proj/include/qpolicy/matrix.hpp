#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "qpolicy/util.hpp"

namespace qp {

// Dense row-major double matrix. Networks here are small; this plus a gemm
// wrapper is all the tensor machinery the project needs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::span<double> flat() { return {data.data(), data.size()}; }
    std::span<const double> flat() const { return {data.data(), data.size()}; }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

using Vector = std::vector<double>;

// C = alpha * op(A) * op(B) + beta * C, row-major. Backed by BLAS.
void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a, const Matrix& b, double beta,
          Matrix& c);

// Pin the BLAS backend to one thread: runs are single-threaded by contract
// and the harness parallelizes across runs instead.
void init_blas_single_thread();

}  // namespace qp
