// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "dynalab/config/experiment.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/core/linalg.hpp"

namespace dynalab::metrics {

namespace {

struct MetricEntry {
  MetricId id;
  std::string_view name;
  bool similarity;
  std::array<bool, 3> kinds;  // weights, activations, gradients
};

constexpr std::array<MetricEntry, 10> kMetrics = {{
    {MetricId::kCkaLinear, "cka_linear", true, {false, true, false}},
    {MetricId::kCkaRbf, "cka_rbf", true, {false, true, false}},
    {MetricId::kPwcca, "pwcca", true, {false, true, false}},
    {MetricId::kConditionNumber, "condition_number", false, {true, true, true}},
    {MetricId::kPer, "per", false, {true, false, true}},
    {MetricId::kGini, "gini", false, {true, true, true}},
    {MetricId::kHoyer, "hoyer", false, {true, true, true}},
    {MetricId::kNormFrobenius, "norm_frobenius", false, {true, true, true}},
    {MetricId::kNormNuclear, "norm_nuclear", false, {true, true, true}},
    {MetricId::kNormInfinity, "norm_infinity", false, {true, true, true}},
}};

const MetricEntry& entry(MetricId id) {
  for (const auto& e : kMetrics) {
    if (e.id == id) return e;
  }
  throw ValidationError("unknown metric id");
}

constexpr std::array<std::string_view, 3> kKindNames = {"weights", "activations", "gradients"};

void require_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw MetricError("non_finite", "input contains a non-finite value");
  }
}

/// Sums a copy of the terms in sorted order, so the result depends only on
/// the multiset of terms.
double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

double column_variance_sum(const Matrix& centered) {
  double s = 0.0;
  for (double v : centered.values()) s += v * v;
  return s;
}

/// Columns of u scaled by s, keeping the first k.
Matrix leading_scores(const SvdResult& d, std::size_t k) {
  Matrix out(d.u.rows(), k);
  for (std::size_t i = 0; i < d.u.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = d.u(i, j) * d.s[j];
  return out;
}

std::size_t kept_directions(const std::vector<double>& s, double truncation) {
  if (s.empty() || s[0] == 0.0) return 0;
  std::size_t k = 0;
  while (k < s.size() && s[k] > truncation * s[0]) ++k;
  return k;
}

}  // namespace

std::string_view metric_name(MetricId id) { return entry(id).name; }

MetricId parse_metric(std::string_view name) {
  std::vector<std::string> names;
  for (const auto& e : kMetrics) {
    if (e.name == name) return e.id;
    names.emplace_back(e.name);
  }
  std::string msg = "unknown metric '" + std::string(name) + "'";
  const std::string guess = config::nearest(name, names);
  if (!guess.empty()) msg += "; did you mean '" + guess + "'?";
  throw ValidationError(msg);
}

const std::vector<MetricId>& all_metrics() {
  static const std::vector<MetricId> kAll = [] {
    std::vector<MetricId> v;
    for (const auto& e : kMetrics) v.push_back(e.id);
    return v;
  }();
  return kAll;
}

std::string_view data_kind_name(DataKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

DataKind parse_data_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<DataKind>(i);
  }
  throw ValidationError("unknown data kind '" + std::string(name) + "'; expected weights, activations or gradients");
}

bool is_similarity(MetricId id) { return entry(id).similarity; }

bool admissible(MetricId id, DataKind kind) { return entry(id).kinds[static_cast<std::size_t>(kind)]; }

void require_admissible(MetricId id, DataKind kind) {
  if (admissible(id, kind)) return;
  std::string allowed;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!entry(id).kinds[i]) continue;
    if (!allowed.empty()) allowed += ", ";
    allowed += kKindNames[i];
  }
  throw ValidationError("metric '" + std::string(metric_name(id)) + "' does not apply to " +
                        std::string(data_kind_name(kind)) + " (accepts " + allowed + ")");
}

MetricOptions options_from_json(const nlohmann::json& j) {
  MetricOptions o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw ValidationError("metric options must be a table");
  for (const auto& [key, value] : j.items()) {
    if (key == "per_divisor") {
      const auto v = value.get<std::string>();
      if (v == "min_dim") {
        o.per_divisor = PerDivisor::kMinDim;
      } else if (v == "max_dim") {
        o.per_divisor = PerDivisor::kMaxDim;
      } else {
        throw ValidationError("per_divisor must be \"min_dim\" or \"max_dim\"");
      }
    } else if (key == "infinity_norm") {
      const auto v = value.get<std::string>();
      if (v == "max_row_sum") {
        o.infinity_norm = InfinityNorm::kMaxRowSum;
      } else if (v == "max_abs_entry") {
        o.infinity_norm = InfinityNorm::kMaxAbsEntry;
      } else {
        throw ValidationError("infinity_norm must be \"max_row_sum\" or \"max_abs_entry\"");
      }
    } else if (key == "bandwidth") {
      if (!value.is_number() || !(value.get<double>() > 0.0)) throw ValidationError("bandwidth must be a positive number");
      o.rbf_bandwidth = value.get<double>();
    } else if (key == "truncation") {
      if (!value.is_number() || value.get<double>() < 0.0 || value.get<double>() >= 1.0) {
        throw ValidationError("truncation must be in [0, 1)");
      }
      o.pwcca_truncation = value.get<double>();
    } else {
      const std::string guess = config::nearest(key, {"per_divisor", "infinity_norm", "bandwidth", "truncation"});
      throw ValidationError("unknown metric option '" + key + "'" +
                            (guess.empty() ? "" : "; did you mean '" + guess + "'?"));
    }
  }
  return o;
}

MetricValue gini(std::span<const double> x) {
  if (x.empty()) throw MetricError("empty", "gini of an empty tensor");
  require_finite(x);
  std::vector<double> c(x.size());
  std::transform(x.begin(), x.end(), c.begin(), [](double v) { return std::abs(v); });
  std::sort(c.begin(), c.end());
  double l1 = 0.0;
  for (double v : c) l1 += v;
  if (l1 == 0.0) throw MetricError("all_zero", "gini of an all-zero tensor");
  const double n = static_cast<double>(c.size());
  double acc = 0.0;
  for (std::size_t k = 1; k <= c.size(); ++k) {
    acc += (c[k - 1] / l1) * ((n - static_cast<double>(k) + 0.5) / n);
  }
  MetricValue out;
  out.value = 1.0 - 2.0 * acc;
  out.meta["elements"] = c.size();
  return out;
}

MetricValue hoyer(std::span<const double> x) {
  if (x.size() < 2) throw MetricError("too_few_elements", "hoyer needs at least 2 elements");
  require_finite(x);
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) throw MetricError("all_zero", "hoyer of an all-zero tensor");
  // Dividing by the peak keeps l1² finite and makes uniform and one-hot inputs exact.
  double l1 = 0.0, sq = 0.0;
  for (double v : x) {
    const double r = std::abs(v) / peak;
    l1 += r;
    sq += r * r;
  }
  const double root_n = std::sqrt(static_cast<double>(x.size()));
  MetricValue out;
  out.value = (root_n - std::sqrt(l1 * l1 / sq)) / (root_n - 1.0);
  out.meta["elements"] = x.size();
  return out;
}

MetricValue condition_number(const Matrix& a) {
  require_finite(a.values());
  const auto s = singular_values(a);
  if (s.empty() || s[0] == 0.0) throw MetricError("zero_matrix", "condition number of a zero matrix");
  MetricValue out;
  const std::size_t rank = numerical_rank(a.rows(), a.cols(), s);
  out.meta["rank"] = rank;
  out.meta["near_null"] = s.size() - rank;
  out.meta["s_max"] = s.front();
  out.meta["s_min"] = s.back();
  out.value = s.back() < rank_tolerance(a.rows(), a.cols(), s.front()) ? std::numeric_limits<double>::infinity()
                                                                      : s.front() / s.back();
  return out;
}

MetricValue per(const Matrix& a, PerDivisor divisor) {
  require_finite(a.values());
  const auto s = singular_values(a);
  double total = 0.0;
  for (double v : s) total += v;
  if (total == 0.0) throw MetricError("zero_matrix", "effective rank of a zero matrix");
  double h = 0.0;
  for (double v : s) {
    const double p = v / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  const double er = std::exp(h);
  const std::size_t d = divisor == PerDivisor::kMinDim ? std::min(a.rows(), a.cols()) : std::max(a.rows(), a.cols());
  MetricValue out;
  out.value = er / static_cast<double>(d);
  out.meta["effective_rank"] = er;
  out.meta["divisor"] = divisor == PerDivisor::kMinDim ? "min_dim" : "max_dim";
  out.meta["divisor_value"] = d;
  return out;
}

MetricValue cka_linear(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw MetricError("row_mismatch", "cka inputs have different row counts");
  if (x.rows() < 2) throw MetricError("too_few_rows", "cka needs at least 2 rows");
  require_finite(x.values());
  require_finite(y.values());
  const Matrix xc = center_columns(x);
  const Matrix yc = center_columns(y);
  if (column_variance_sum(xc) == 0.0 || column_variance_sum(yc) == 0.0) {
    throw MetricError("zero_variance", "cka input has identical rows");
  }
  const double cross = frobenius_norm(matmul_tn(yc, xc));
  MetricValue out;
  out.value = cross * cross / (frobenius_norm(matmul_tn(xc, xc)) * frobenius_norm(matmul_tn(yc, yc)));
  out.meta["rows"] = x.rows();
  out.meta["kernel"] = "linear";
  return out;
}

namespace {

/// Squared Euclidean distances between rows, computed identically for (i, j) and (j, i).
Matrix squared_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double t = x(i, k) - x(j, k);
        s += t * t;
      }
      d(i, j) = d(j, i) = s;
    }
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CenteredGram {
  Matrix k;
  double sigma = 0.0;
};

CenteredGram centered_rbf_gram(const Matrix& x, double multiplier) {
  const std::size_t n = x.rows();
  const Matrix d2 = squared_distances(x);
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist.push_back(std::sqrt(d2(i, j)));
  const double sigma = multiplier * median(dist);
  if (!(sigma > 0.0)) throw MetricError("degenerate", "rbf bandwidth is zero; inputs are (mostly) identical points");
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = std::exp(-d2(i, j) / (2.0 * sigma * sigma));
  std::vector<double> row_mean(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = k(i, j);
    row_mean[i] = sorted_sum(row) / static_cast<double>(n);
  }
  const double grand = sorted_sum(row_mean) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = ((k(i, j) - row_mean[i]) - row_mean[j]) + grand;
  return {std::move(k), sigma};
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  std::vector<double> terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms[i] = a.values()[i] * b.values()[i];
  return sorted_sum(std::move(terms));
}

}  // namespace

MetricValue cka_rbf(const Matrix& x, const Matrix& y, double bandwidth_multiplier) {
  if (x.rows() != y.rows()) throw MetricError("row_mismatch", "cka inputs have different row counts");
  if (x.rows() < 3) throw MetricError("too_few_rows", "rbf cka needs at least 3 rows");
  require_finite(x.values());
  require_finite(y.values());
  const auto kx = centered_rbf_gram(x, bandwidth_multiplier);
  const auto ky = centered_rbf_gram(y, bandwidth_multiplier);
  const double xy = frobenius_inner(kx.k, ky.k);
  const double xx = frobenius_inner(kx.k, kx.k);
  const double yy = frobenius_inner(ky.k, ky.k);
  if (!(xx > 0.0) || !(yy > 0.0)) throw MetricError("degenerate", "rbf gram matrix is constant after centering");
  MetricValue out;
  out.value = xy / std::sqrt(xx * yy);
  out.meta["rows"] = x.rows();
  out.meta["kernel"] = "rbf";
  out.meta["bandwidth_multiplier"] = bandwidth_multiplier;
  out.meta["sigma_x"] = kx.sigma;
  out.meta["sigma_y"] = ky.sigma;
  return out;
}

MetricValue pwcca(const Matrix& x, const Matrix& y, double truncation) {
  if (x.rows() != y.rows()) throw MetricError("row_mismatch", "pwcca inputs have different row counts");
  require_finite(x.values());
  require_finite(y.values());
  const std::size_t n = x.rows();
  if (n <= std::max(x.cols(), y.cols())) {
    throw MetricError("too_few_rows", "pwcca needs more rows (" + std::to_string(n) + ") than columns (" +
                                          std::to_string(std::max(x.cols(), y.cols())) + ")");
  }
  const Matrix xc = center_columns(x);
  const Matrix yc = center_columns(y);
  const SvdResult dx = svd(xc);
  const SvdResult dy = svd(yc);
  const std::size_t kx = kept_directions(dx.s, truncation);
  const std::size_t ky = kept_directions(dy.s, truncation);
  if (kx == 0 || ky == 0) throw MetricError("rank_deficient", "pwcca input has no variance left after truncation");
  const QrResult qx = qr(leading_scores(dx, kx));
  const QrResult qy = qr(leading_scores(dy, ky));
  if (!qx.deficient_columns.empty() || !qy.deficient_columns.empty()) {
    throw MetricError("rank_deficient", "pwcca input is rank deficient after truncation");
  }
  const SvdResult c = svd(matmul_tn(qx.q, qy.q));
  const Matrix h = matmul(qx.q, c.u);  // canonical directions in x-space
  const std::size_t m = c.s.size();
  std::vector<double> alpha(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < xc.cols(); ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += h(r, i) * xc(r, j);
      alpha[i] += std::abs(dot);
    }
  }
  double alpha_sum = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    alpha_sum += alpha[i];
    weighted += alpha[i] * std::min(c.s[i], 1.0);
  }
  if (!(alpha_sum > 0.0)) throw MetricError("degenerate", "pwcca projection weights are all zero");
  MetricValue out;
  out.value = weighted / alpha_sum;
  out.meta["rank_x"] = kx;
  out.meta["rank_y"] = ky;
  out.meta["truncated_x"] = std::min(x.rows(), x.cols()) - kx;
  out.meta["truncated_y"] = std::min(y.rows(), y.cols()) - ky;
  out.meta["truncation"] = truncation;
  return out;
}

Norms norms(const Matrix& a, InfinityNorm infinity) {
  Norms n;
  n.frobenius = frobenius_norm(a);
  for (double s : singular_values(a)) n.nuclear += s;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (double v : a.row(i)) {
      row = infinity == InfinityNorm::kMaxRowSum ? row + std::abs(v) : std::max(row, std::abs(v));
    }
    n.infinity = std::max(n.infinity, row);
  }
  return n;
}

Matrix matricize(const Tensor& t) { return t.as_matrix(); }

Matrix feature_matrix(const Tensor& t) { return t.as_feature_matrix(); }

namespace {

void note_shape(MetricValue& v, const Tensor& t, const Matrix& m) {
  v.meta["shape"] = t.shape();
  if (t.rank() != 2) v.meta["matricized"] = Shape{m.rows(), m.cols()};
}

}  // namespace

MetricValue compute(MetricId id, DataKind kind, const Tensor& tensor, const MetricOptions& options) {
  require_admissible(id, kind);
  if (is_similarity(id)) {
    throw ValidationError("metric '" + std::string(metric_name(id)) + "' needs a reference tensor");
  }
  const Matrix m = matricize(tensor);
  require_finite(m.values());
  MetricValue out;
  switch (id) {
    case MetricId::kGini:
      out = gini(m.values());
      break;
    case MetricId::kHoyer:
      out = hoyer(m.values());
      break;
    case MetricId::kConditionNumber:
      out = condition_number(m);
      break;
    case MetricId::kPer:
      out = per(m, options.per_divisor);
      break;
    case MetricId::kNormFrobenius:
      out.value = norms(m, options.infinity_norm).frobenius;
      break;
    case MetricId::kNormNuclear:
      out.value = norms(m, options.infinity_norm).nuclear;
      break;
    case MetricId::kNormInfinity:
      out.value = norms(m, options.infinity_norm).infinity;
      out.meta["infinity_norm"] = options.infinity_norm == InfinityNorm::kMaxRowSum ? "max_row_sum" : "max_abs_entry";
      break;
    default:
      throw ValidationError("unhandled metric");
  }
  note_shape(out, tensor, m);
  return out;
}

MetricValue compute_similarity(MetricId id, DataKind kind, const Tensor& tensor, const Tensor& reference,
                               const MetricOptions& options) {
  require_admissible(id, kind);
  if (!is_similarity(id)) {
    throw ValidationError("metric '" + std::string(metric_name(id)) + "' takes a single tensor");
  }
  const Matrix x = feature_matrix(tensor);
  const Matrix y = feature_matrix(reference);
  MetricValue out;
  switch (id) {
    case MetricId::kCkaLinear:
      out = cka_linear(x, y);
      break;
    case MetricId::kCkaRbf:
      out = cka_rbf(x, y, options.rbf_bandwidth);
      break;
    case MetricId::kPwcca:
      out = pwcca(x, y, options.pwcca_truncation);
      break;
    default:
      throw ValidationError("unhandled metric");
  }
  out.meta["shape"] = tensor.shape();
  return out;
}

}  // namespace dynalab::metrics
