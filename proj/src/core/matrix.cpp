// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/core/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dynalab/core/error.hpp"

namespace dynalab {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + dims(a) + " vs " + dims(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + dims(a) + " · " + dims(b) + ")");
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ (" + dims(a) + " · " + dims(b) + "ᵀ)");
  }
  Matrix c(a.rows(), b.rows());
  const std::size_t k_dim = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * k_dim;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data() + j * k_dim;
      double acc = 0.0;
      for (std::size_t k = 0; k < k_dim; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: inner dimensions differ (" + dims(a) + "ᵀ · " + dims(b) + ")");
  }
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.data() + k * a.cols();
    const double* brow = b.data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      double* out = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_inplace(c, b);
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c = a;
  auto out = c.values();
  auto in = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= in[i];
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  auto out = c.values();
  auto in = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= in[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& v : c.values()) v *= s;
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  auto out = a.values();
  auto in = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
}

void axpy_inplace(Matrix& y, double alpha, const Matrix& x) {
  require_same_shape(y, x, "axpy");
  auto out = y.values();
  auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * in[i];
}

Matrix softmax_rows(const Matrix& a) {
  Matrix p(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (double& v : out) v /= z;
  }
  return p;
}

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double mean(std::span<const double> x) {
  if (x.empty()) throw DimensionError("mean: empty input");
  return sum(x) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const double mu = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - mu) * (v - mu);
  return acc / static_cast<double>(x.size());
}

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

std::vector<double> column_means(const Matrix& a) {
  std::vector<double> mu(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) mu[j] += a(i, j);
  for (double& v : mu) v /= static_cast<double>(a.rows());
  return mu;
}

Matrix center_columns(const Matrix& a) {
  const auto mu = column_means(a);
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) -= mu[j];
  return c;
}

}  // namespace dynalab
