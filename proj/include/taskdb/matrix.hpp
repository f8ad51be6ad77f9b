#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "taskdb/error.hpp"

namespace taskdb {

/// Dense row-major matrix of doubles. Small on purpose: the factorization
/// and the stub kernels need nothing beyond contiguous storage and a few
/// products.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
      raise(ErrorCode::DimensionMismatch, "matrix storage does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  const double* row(std::size_t r) const { return values_.data() + r * cols_; }
  double* row(std::size_t r) { return values_.data() + r * cols_; }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out.at(c, r) = at(r, c);
    return out;
  }

  /// this (m x n) times other (n x p).
  Matrix multiply(const Matrix& other) const {
    if (cols_ != other.rows_)
      raise(ErrorCode::DimensionMismatch, "matrix product inner dimensions differ");
    Matrix out(rows_, other.cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = 0; k < cols_; ++k) {
        double v = at(r, k);
        if (v == 0.0) continue;
        const double* orow = other.row(k);
        double* dst = out.row(r);
        for (std::size_t c = 0; c < other.cols_; ++c) dst[c] += v * orow[c];
      }
    }
    return out;
  }

  /// this (m x n) times other^T (p x n) -> (m x p).
  Matrix multiply_transposed(const Matrix& other) const {
    if (cols_ != other.cols_)
      raise(ErrorCode::DimensionMismatch, "matrix product inner dimensions differ");
    Matrix out(rows_, other.rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < other.rows_; ++c) {
        double acc = 0.0;
        const double* a = row(r);
        const double* b = other.row(c);
        for (std::size_t k = 0; k < cols_; ++k) acc += a[k] * b[k];
        out.at(r, c) = acc;
      }
    }
    return out;
  }

  double frobenius_norm() const {
    double acc = 0.0;
    for (double v : values_) acc += v * v;
    return std::sqrt(acc);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

}  // namespace taskdb
