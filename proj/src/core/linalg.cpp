// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/core/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dynalab/core/error.hpp"

namespace dynalab {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

using Column = std::vector<double>;

double dot(const Column& a, const Column& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Fills columns[k] for every k in `missing` with unit vectors orthogonal to
// all other columns, via two passes of Gram-Schmidt over the standard basis.
void complete_orthonormal(std::vector<Column>& columns, const std::vector<bool>& valid) {
  const std::size_t m = columns.empty() ? 0 : columns[0].size();
  std::vector<bool> have = valid;
  std::size_t basis = 0;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (have[k]) continue;
    while (basis < m) {
      Column e(m, 0.0);
      e[basis++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
          if (!have[j]) continue;
          const double proj = dot(columns[j], e);
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * columns[j][i];
        }
      }
      const double norm = std::sqrt(dot(e, e));
      if (norm > 0.5) {
        for (double& v : e) v /= norm;
        columns[k] = std::move(e);
        have[k] = true;
        break;
      }
    }
    if (!have[k]) throw ConvergenceError("svd: could not complete orthonormal basis");
  }
}

// Jacobi on a tall matrix given as columns (rows >= cols).
SvdResult jacobi_tall(const Matrix& a, const SvdOptions& options) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<Column> w(n, Column(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) w[j][i] = a(i, j);
  std::vector<Column> v(n, Column(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  const double tol = kEps * std::sqrt(static_cast<double>(std::max<std::size_t>(m, 1)));
  bool converged = (n < 2);
  int sweep = 0;
  double worst = 0.0;
  for (; sweep < options.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, off);
        if (off <= tol) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "svd: one-sided Jacobi did not converge after " << options.max_sweeps << " sweeps ("
        << m << "x" << n << ", ||A||_F=" << frobenius_norm(a) << ", worst off-orthogonality "
        << worst << ")";
    throw ConvergenceError(msg.str());
  }

  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(dot(w[j], w[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return sv[x] > sv[y]; });

  const double s_max = n ? sv[order[0]] : 0.0;
  const double zero_tol = rank_tolerance(m, n, s_max);
  std::vector<Column> ucols(n, Column(m, 0.0));
  std::vector<bool> valid(n, false);
  SvdResult out;
  out.s.resize(n);
  out.vt = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sv[j];
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v[j][i];
    if (sv[j] > zero_tol && sv[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) ucols[k][i] = w[j][i] / sv[j];
      valid[k] = true;
    }
  }
  complete_orthonormal(ucols, valid);
  out.u = Matrix(m, n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = ucols[k][i];
  return out;
}

}  // namespace

double rank_tolerance(std::size_t rows, std::size_t cols, double s_max) {
  return kEps * static_cast<double>(std::max(rows, cols)) * s_max;
}

std::size_t numerical_rank(std::size_t rows, std::size_t cols, const std::vector<double>& s) {
  if (s.empty()) return 0;
  const double tol = rank_tolerance(rows, cols, s.front());
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [&](double x) { return x > tol; }));
}

SvdResult svd(const Matrix& a, const SvdOptions& options) {
  if (a.empty()) throw DimensionError("svd: empty matrix");
  for (double x : a.values()) {
    if (!std::isfinite(x)) throw ValidationError("svd: non-finite entry");
  }
  if (a.rows() >= a.cols()) return jacobi_tall(a, options);
  // Aᵀ = U S Vᵀ  =>  A = V S Uᵀ.
  SvdResult t = jacobi_tall(transpose(a), options);
  SvdResult out;
  out.u = transpose(t.vt);
  out.s = std::move(t.s);
  out.vt = transpose(t.u);
  return out;
}

std::vector<double> singular_values(const Matrix& a) { return svd(a).s; }

QrResult qr(const Matrix& a, double relative_tolerance) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m < n) {
    throw DimensionError("qr: requires rows >= cols, got " + std::to_string(m) + "x" +
                         std::to_string(n));
  }
  if (relative_tolerance < 0.0) relative_tolerance = kEps * static_cast<double>(m);

  Matrix r = a;
  std::vector<Column> reflectors(n);
  for (std::size_t k = 0; k < n; ++k) {
    Column x(m - k);
    for (std::size_t i = k; i < m; ++i) x[i - k] = r(i, k);
    const double norm = std::sqrt(dot(x, x));
    if (norm == 0.0) continue;
    const double alpha = x[0] > 0.0 ? -norm : norm;
    x[0] -= alpha;
    const double vnorm = std::sqrt(dot(x, x));
    if (vnorm == 0.0) continue;
    for (double& e : x) e /= vnorm;
    for (std::size_t j = k; j < n; ++j) {
      double proj = 0.0;
      for (std::size_t i = k; i < m; ++i) proj += x[i - k] * r(i, j);
      for (std::size_t i = k; i < m; ++i) r(i, j) -= 2.0 * proj * x[i - k];
    }
    reflectors[k] = std::move(x);
  }

  // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
  Matrix q(m, n);
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t kk = n; kk-- > 0;) {
    const Column& v = reflectors[kk];
    if (v.empty()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double proj = 0.0;
      for (std::size_t i = kk; i < m; ++i) proj += v[i - kk] * q(i, j);
      for (std::size_t i = kk; i < m; ++i) q(i, j) -= 2.0 * proj * v[i - kk];
    }
  }

  QrResult out;
  out.r = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) out.r(i, j) = r(i, j);
  for (std::size_t k = 0; k < n; ++k) {
    if (out.r(k, k) < 0.0) {
      for (std::size_t j = k; j < n; ++j) out.r(k, j) = -out.r(k, j);
      for (std::size_t i = 0; i < m; ++i) q(i, k) = -q(i, k);
    }
  }
  out.q = std::move(q);

  double diag_max = 0.0;
  for (std::size_t k = 0; k < n; ++k) diag_max = std::max(diag_max, std::abs(out.r(k, k)));
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(out.r(k, k)) <= relative_tolerance * diag_max) out.deficient_columns.push_back(k);
  }
  return out;
}

}  // namespace dynalab
