// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dynalab {

/// Dense row-major matrix of doubles. This is the working type for all
/// arithmetic; storage dtypes are handled by Tensor.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix diagonal(std::span<const double> diag);

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
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Products. All accumulate in f64 with k ascending.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Elementwise.
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& y, double alpha, const Matrix& x);

/// Row-wise softmax with the row maximum subtracted first.
Matrix softmax_rows(const Matrix& a);

// Reductions.
double sum(std::span<const double> x);
double mean(std::span<const double> x);
/// Population variance (divides by N).
double variance(std::span<const double> x);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

std::vector<double> column_means(const Matrix& a);
/// Subtracts each column's mean.
Matrix center_columns(const Matrix& a);

}  // namespace dynalab
