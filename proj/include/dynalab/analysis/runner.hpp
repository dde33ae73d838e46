// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynalab/analysis/components.hpp"
#include "dynalab/metrics/metrics.hpp"
#include "dynalab/store/checkpoint.hpp"

namespace dynalab::analysis {

/// Which checkpoint a similarity metric compares against.
struct Reference {
  enum class Mode { kPrevious, kStep, kRun };
  Mode mode = Mode::kPrevious;
  std::int64_t step = 0;  // kStep
  std::string run;        // kRun: same step in this run

  /// "previous", "step:<k>" or "run:<id>".
  static Reference parse(std::string_view text);
  std::string text() const;
};

enum class Aggregate { kNone, kMean };

struct MetricRequest {
  metrics::MetricId metric = metrics::MetricId::kPer;
  metrics::DataKind data_kind = metrics::DataKind::kWeights;
  std::vector<ComponentSpec> components;
  DataSource source = DataSource::kTrain;
  Aggregate aggregate = Aggregate::kNone;
  Reference reference;
  metrics::MetricOptions options;
  nlohmann::json options_json = nlohmann::json::object();

  /// Component column for aggregated rows: labels joined with '+'.
  std::string aggregate_label() const;
};

/// start/end are inclusive bounds on available checkpoint steps; stride keeps
/// steps with (step - first) % stride == 0. A non-empty list overrides all three.
struct StepSelection {
  std::optional<std::int64_t> start;
  std::optional<std::int64_t> end;
  std::int64_t stride = 0;
  std::vector<std::int64_t> list;
};

struct AnalysisConfig {
  std::vector<std::string> runs;
  std::string runs_dir;  // empty: DYNALAB_RUNS_DIR or ./runs
  std::string output;    // "<path>.csv"; the JSON mirror goes next to it
  StepSelection steps;
  std::vector<MetricRequest> metrics;
};

AnalysisConfig parse_analysis_config(const nlohmann::json& j);
AnalysisConfig parse_analysis_toml(std::string_view text, const std::string& source = "<string>");
AnalysisConfig load_analysis_config(const std::filesystem::path& path);
std::filesystem::path resolve_analysis_runs_dir(const AnalysisConfig& config);

/// Applies the selection to the steps a run has. Throws ValidationError when
/// a listed step is missing or the result is empty.
std::vector<std::int64_t> select_steps(const StepSelection& selection, const std::vector<std::int64_t>& available);

struct MetricRow {
  std::string run;
  std::int64_t step = 0;
  std::string component;
  std::string metric;
  double value = 0.0;
  nlohmann::json meta = nlohmann::json::object();
  std::string error;  // reason code; empty for a computed value
  std::optional<double> delta;
  std::size_t request = 0;  // index into AnalysisConfig::metrics; orders ties
};

struct MetricSeries {
  std::vector<MetricRow> rows;
  bool has_delta = false;

  std::size_t error_count() const;
  /// Header `run,step,component,metric,value,meta` (plus `,delta` for comparisons).
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Per-cell failures become error rows; invalid requests throw ValidationError
/// before anything is computed.
MetricSeries run_analysis(const AnalysisConfig& config, const store::CheckpointStore& store);

/// Runs the same requests on two runs over a shared step grid and fills
/// delta = value(a) - value(b) on both rows of each matched key.
MetricSeries compare_runs(const std::string& run_a, const std::string& run_b, const AnalysisConfig& config,
                          const store::CheckpointStore& store);

/// Writes `<output>` as CSV and the JSON mirror with extension .json.
void write_series(const MetricSeries& series, const std::filesystem::path& csv_path);

/// Orders strings with embedded numbers numerically ("layers.2" < "layers.10").
bool natural_less(std::string_view a, std::string_view b);

}  // namespace dynalab::analysis
