// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynalab/core/matrix.hpp"
#include "dynalab/core/tensor.hpp"

namespace dynalab::metrics {

enum class MetricId {
  kCkaLinear,
  kCkaRbf,
  kPwcca,
  kConditionNumber,
  kPer,
  kGini,
  kHoyer,
  kNormFrobenius,
  kNormNuclear,
  kNormInfinity,
};

enum class DataKind { kWeights, kActivations, kGradients };

std::string_view metric_name(MetricId id);
/// Throws ValidationError naming the nearest known metric.
MetricId parse_metric(std::string_view name);
const std::vector<MetricId>& all_metrics();

std::string_view data_kind_name(DataKind kind);
DataKind parse_data_kind(std::string_view name);

/// Similarity metrics compare a tensor against a reference.
bool is_similarity(MetricId id);
/// Which kinds of checkpoint data each metric accepts.
bool admissible(MetricId id, DataKind kind);
/// Throws ValidationError for an inadmissible pair.
void require_admissible(MetricId id, DataKind kind);

struct MetricValue {
  double value = 0.0;
  nlohmann::json meta = nlohmann::json::object();
};

enum class PerDivisor { kMinDim, kMaxDim };
enum class InfinityNorm { kMaxRowSum, kMaxAbsEntry };

struct MetricOptions {
  PerDivisor per_divisor = PerDivisor::kMinDim;
  InfinityNorm infinity_norm = InfinityNorm::kMaxRowSum;
  double rbf_bandwidth = 1.0;        // multiplier on the median pairwise distance
  double pwcca_truncation = 1e-6;    // relative singular-value cutoff
};

/// Reads options from a JSON object with keys per_divisor ("min_dim" or
/// "max_dim"), infinity_norm ("max_row_sum" or "max_abs_entry"),
/// bandwidth and truncation. Unknown keys throw ValidationError.
MetricOptions options_from_json(const nlohmann::json& j);

MetricValue gini(std::span<const double> x);
MetricValue hoyer(std::span<const double> x);
MetricValue condition_number(const Matrix& a);
MetricValue per(const Matrix& a, PerDivisor divisor = PerDivisor::kMinDim);
/// Rows are examples, columns features; both inputs are centered internally.
MetricValue cka_linear(const Matrix& x, const Matrix& y);
MetricValue cka_rbf(const Matrix& x, const Matrix& y, double bandwidth_multiplier = 1.0);
/// Asymmetric: the projection weights come from x.
MetricValue pwcca(const Matrix& x, const Matrix& y, double truncation = 1e-6);

struct Norms {
  double frobenius = 0.0;
  double nuclear = 0.0;
  double infinity = 0.0;
};
Norms norms(const Matrix& a, InfinityNorm infinity = InfinityNorm::kMaxRowSum);

/// Matrix view used for non-similarity metrics: rank >= 3 is flattened to
/// (first dim × rest), rank 1 becomes a column.
Matrix matricize(const Tensor& t);
/// Matrix view used for similarity metrics: (product of leading dims × last dim).
Matrix feature_matrix(const Tensor& t);

/// Applies a single-tensor metric. Checks admissibility and finiteness.
MetricValue compute(MetricId id, DataKind kind, const Tensor& tensor, const MetricOptions& options = {});
/// Applies a similarity metric to (tensor, reference).
MetricValue compute_similarity(MetricId id, DataKind kind, const Tensor& tensor, const Tensor& reference,
                               const MetricOptions& options = {});

}  // namespace dynalab::metrics
