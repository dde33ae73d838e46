// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "dynalab/core/matrix.hpp"

namespace dynalab {

/// Thin SVD: a = u · diag(s) · vt with r = min(m, n).
struct SvdResult {
  Matrix u;               // m × r, orthonormal columns
  std::vector<double> s;  // length r, non-increasing, >= 0
  Matrix vt;              // r × n, orthonormal rows
};

struct SvdOptions {
  int max_sweeps = 60;
};

/// One-sided (Hestenes) Jacobi SVD. Throws ConvergenceError when the sweep
/// cap is reached before all column pairs are orthogonal.
SvdResult svd(const Matrix& a, const SvdOptions& options = {});

std::vector<double> singular_values(const Matrix& a);

/// Threshold below which a singular value counts as an exact zero:
/// ε_machine · max(m, n) · s_max.
double rank_tolerance(std::size_t rows, std::size_t cols, double s_max);

/// Numerical rank using rank_tolerance.
std::size_t numerical_rank(std::size_t rows, std::size_t cols, const std::vector<double>& s);

struct QrResult {
  Matrix q;  // m × n, orthonormal columns
  Matrix r;  // n × n, upper triangular with non-negative diagonal
  /// Columns whose |r_ii| fell below `tolerance · max_j |r_jj|`.
  std::vector<std::size_t> deficient_columns;
};

/// Householder QR of a tall matrix (m >= n).
QrResult qr(const Matrix& a, double relative_tolerance = -1.0);

}  // namespace dynalab
