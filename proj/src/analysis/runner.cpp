// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/analysis/runner.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <tuple>

#include "dynalab/config/experiment.hpp"
#include "dynalab/core/error.hpp"

namespace dynalab::analysis {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) != known.end()) continue;
    const std::string guess = config::nearest(key, known);
    throw ValidationError("unknown " + where + " key '" + key + "'" +
                          (guess.empty() ? "" : "; did you mean '" + guess + "'?"));
  }
}

std::string string_field(const json& j, const std::string& key, const std::string& where) {
  if (!j[key].is_string()) throw ValidationError(where + "." + key + " must be a string");
  return j[key].get<std::string>();
}

std::int64_t int_field(const json& j, const std::string& key, const std::string& where) {
  if (!j[key].is_number_integer()) throw ValidationError(where + "." + key + " must be an integer");
  return j[key].get<std::int64_t>();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool row_less(const MetricRow& a, const MetricRow& b) {
  if (a.run != b.run) return a.run < b.run;
  if (a.step != b.step) return a.step < b.step;
  if (a.component != b.component) return natural_less(a.component, b.component);
  if (a.metric != b.metric) return a.metric < b.metric;
  return a.request < b.request;
}

MetricRow error_row(const std::string& run, std::int64_t step, const std::string& component, const std::string& metric,
                    std::size_t request, const std::string& code, const std::string& message) {
  MetricRow r;
  r.run = run;
  r.step = step;
  r.component = component;
  r.metric = metric;
  r.request = request;
  r.value = std::numeric_limits<double>::quiet_NaN();
  r.error = code;
  r.meta["error"] = code;
  r.meta["message"] = message;
  return r;
}

/// Evaluates a callable, mapping library failures to reason codes.
template <typename F>
bool guarded(F&& f, std::string& code, std::string& message) {
  try {
    f();
    return true;
  } catch (const MetricError& e) {
    code = e.code();
    message = e.what();
  } catch (const NotFoundError& e) {
    code = "missing_data";
    message = e.what();
  } catch (const ConvergenceError& e) {
    code = "no_convergence";
    message = e.what();
  } catch (const IntegrityError& e) {
    code = "integrity";
    message = e.what();
  } catch (const DimensionError& e) {
    code = "shape_mismatch";
    message = e.what();
  }
  return false;
}

class CheckpointCache {
 public:
  explicit CheckpointCache(const store::CheckpointStore& store) : store_(store) {}

  const CheckpointView& get(const std::string& run, std::int64_t step) {
    const auto key = std::make_pair(run, step);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      auto entry = std::make_unique<Entry>();
      entry->checkpoint = store_.read_checkpoint(run, step);
      entry->view.checkpoint = &entry->checkpoint;
      entry->view.config = model_config_of(entry->checkpoint.manifest);
      it = cache_.emplace(key, std::move(entry)).first;
    }
    return it->second->view;
  }

  /// Drops everything except the given checkpoints.
  void retain(const std::vector<std::pair<std::string, std::int64_t>>& keep) {
    for (auto it = cache_.begin(); it != cache_.end();) {
      if (std::find(keep.begin(), keep.end(), it->first) == keep.end()) {
        it = cache_.erase(it);
      } else {
        ++it;
      }
    }
  }

 private:
  struct Entry {
    store::Checkpoint checkpoint;
    CheckpointView view;
  };
  const store::CheckpointStore& store_;
  std::map<std::pair<std::string, std::int64_t>, std::unique_ptr<Entry>> cache_;
};

struct CellResult {
  std::string label;
  bool ok = false;
  metrics::MetricValue value;
  std::string code;
  std::string message;
  std::vector<std::string> provenance;
  json resolve_meta;
};

struct ReferenceTarget {
  std::string run;
  std::int64_t step = 0;
  bool available = false;
};

ReferenceTarget reference_for(const Reference& ref, const std::string& run, const std::vector<std::int64_t>& steps,
                              std::size_t index) {
  switch (ref.mode) {
    case Reference::Mode::kPrevious:
      if (index == 0) return {run, 0, false};
      return {run, steps[index - 1], true};
    case Reference::Mode::kStep:
      return {run, ref.step, true};
    case Reference::Mode::kRun:
      return {ref.run, steps[index], true};
  }
  return {};
}

/// Computes one request at one checkpoint, one cell per resolved component.
std::vector<CellResult> compute_cells(const MetricRequest& req, const CheckpointView& view,
                                      const CheckpointView* reference) {
  std::vector<CellResult> cells;
  for (const auto& spec : req.components) {
    std::vector<ResolvedComponent> resolved;
    CellResult failure;
    failure.label = spec.label();
    if (!guarded([&] { resolved = resolve(spec, view, req.source); }, failure.code, failure.message)) {
      cells.push_back(std::move(failure));
      continue;
    }
    std::vector<ResolvedComponent> ref_resolved;
    if (metrics::is_similarity(req.metric) && reference != nullptr) {
      if (!guarded([&] { ref_resolved = resolve(spec, *reference, req.source); }, failure.code, failure.message)) {
        failure.code = "reference_" + failure.code;
        cells.push_back(std::move(failure));
        continue;
      }
    }
    for (auto& rc : resolved) {
      CellResult cell;
      cell.label = rc.label;
      cell.provenance = rc.provenance;
      cell.resolve_meta = rc.meta;
      if (metrics::is_similarity(req.metric)) {
        const auto match = std::find_if(ref_resolved.begin(), ref_resolved.end(),
                                        [&](const ResolvedComponent& r) { return r.label == rc.label; });
        if (reference == nullptr || match == ref_resolved.end()) {
          cell.code = "no_reference";
          cell.message = reference == nullptr ? "no earlier checkpoint to compare against"
                                              : "reference checkpoint lacks '" + rc.label + "'";
        } else {
          cell.ok = guarded(
              [&] {
                cell.value = metrics::compute_similarity(req.metric, req.data_kind, rc.tensor, match->tensor,
                                                         req.options);
              },
              cell.code, cell.message);
        }
      } else {
        cell.ok = guarded([&] { cell.value = metrics::compute(req.metric, req.data_kind, rc.tensor, req.options); },
                          cell.code, cell.message);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

json request_meta(const MetricRequest& req, const ReferenceTarget* ref) {
  json m = json::object();
  m["data"] = metrics::data_kind_name(req.data_kind);
  if (req.data_kind != metrics::DataKind::kWeights) m["source"] = data_source_name(req.source);
  if (!req.options_json.empty()) m["options"] = req.options_json;
  if (ref != nullptr && ref->available) {
    m["reference_run"] = ref->run;
    m["reference_step"] = ref->step;
  }
  return m;
}

void emit_rows(const MetricRequest& req, std::size_t request_index, const std::string& run, std::int64_t step,
               const std::vector<CellResult>& cells, const ReferenceTarget* ref, std::vector<MetricRow>& rows) {
  const std::string metric(metrics::metric_name(req.metric));
  if (req.aggregate == Aggregate::kNone) {
    for (const auto& c : cells) {
      if (!c.ok) {
        rows.push_back(error_row(run, step, c.label, metric, request_index, c.code, c.message));
        continue;
      }
      MetricRow r;
      r.run = run;
      r.step = step;
      r.component = c.label;
      r.metric = metric;
      r.request = request_index;
      r.value = c.value.value;
      r.meta = request_meta(req, ref);
      for (const auto& [k, v] : c.value.meta.items()) r.meta[k] = v;
      for (const auto& [k, v] : c.resolve_meta.items()) r.meta[k] = v;
      r.meta["provenance"] = c.provenance;
      rows.push_back(std::move(r));
    }
    return;
  }
  const std::string label = req.aggregate_label();
  json failures = json::array();
  json labels = json::array();
  double sum = 0.0;
  for (const auto& c : cells) {
    labels.push_back(c.label);
    if (!c.ok) {
      failures.push_back({{"component", c.label}, {"error", c.code}, {"message", c.message}});
    } else {
      sum += c.value.value;
    }
  }
  if (!failures.empty()) {
    MetricRow r = error_row(run, step, label, metric, request_index, "component_failed",
                            std::to_string(failures.size()) + " of " + std::to_string(cells.size()) +
                                " components failed");
    r.meta["failures"] = failures;
    rows.push_back(std::move(r));
    return;
  }
  MetricRow r;
  r.run = run;
  r.step = step;
  r.component = label;
  r.metric = metric;
  r.request = request_index;
  r.value = sum / static_cast<double>(cells.size());
  r.meta = request_meta(req, ref);
  r.meta["aggregate"] = "mean";
  r.meta["aggregate_order"] = "metric per component, then mean";
  r.meta["count"] = cells.size();
  r.meta["components"] = labels;
  rows.push_back(std::move(r));
}

/// Validation shared by run_analysis and compare_runs; returns the step grid for each run.
std::map<std::string, std::vector<std::int64_t>> validate_analysis(const AnalysisConfig& config,
                                                                   const store::CheckpointStore& store) {
  if (config.runs.empty()) throw ValidationError("analysis names no run");
  if (config.metrics.empty()) throw ValidationError("analysis has no [[metrics]] entries");
  std::map<std::string, std::vector<std::int64_t>> grids;
  for (const auto& run : config.runs) {
    const auto available = store.list_steps(run);
    if (available.empty()) {
      const std::string guess = config::nearest(run, store.list_runs());
      throw ValidationError("run '" + run + "' has no checkpoints under " + store.root().string() +
                            (guess.empty() ? "" : "; did you mean '" + guess + "'?"));
    }
    const auto steps = select_steps(config.steps, available);
    const auto manifest = store.read_manifest(run, steps.front());
    const auto model = model_config_of(manifest);
    for (const auto& req : config.metrics) {
      metrics::require_admissible(req.metric, req.data_kind);
      for (const auto& spec : req.components) validate_component(spec, model);
      if (!metrics::is_similarity(req.metric)) continue;
      if (req.reference.mode == Reference::Mode::kStep && !store.has_step(run, req.reference.step)) {
        throw ValidationError("reference step " + std::to_string(req.reference.step) + " does not exist in run '" +
                              run + "'");
      }
      if (req.reference.mode == Reference::Mode::kRun) {
        for (auto s : steps) {
          if (!store.has_step(req.reference.run, s)) {
            throw ValidationError("reference run '" + req.reference.run + "' has no checkpoint at step " +
                                  std::to_string(s));
          }
        }
      }
    }
    grids[run] = steps;
  }
  return grids;
}

MetricSeries analyze_validated(const AnalysisConfig& config, const store::CheckpointStore& store,
                               const std::map<std::string, std::vector<std::int64_t>>& grids) {
  MetricSeries series;
  CheckpointCache cache(store);
  for (const auto& run : config.runs) {
    const auto& steps = grids.at(run);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::int64_t step = steps[i];
      std::vector<std::pair<std::string, std::int64_t>> keep = {{run, step}};
      const CheckpointView* view = nullptr;
      std::string code, message;
      if (!guarded([&] { view = &cache.get(run, step); }, code, message)) {
        for (std::size_t r = 0; r < config.metrics.size(); ++r) {
          series.rows.push_back(error_row(run, step, config.metrics[r].aggregate_label(),
                                          std::string(metrics::metric_name(config.metrics[r].metric)), r, code,
                                          message));
        }
        continue;
      }
      for (std::size_t r = 0; r < config.metrics.size(); ++r) {
        const MetricRequest& req = config.metrics[r];
        ReferenceTarget target;
        const CheckpointView* ref_view = nullptr;
        if (metrics::is_similarity(req.metric)) {
          target = reference_for(req.reference, run, steps, i);
          if (target.available) {
            std::string rc, rm;
            if (!guarded([&] { ref_view = &cache.get(target.run, target.step); }, rc, rm)) {
              series.rows.push_back(error_row(run, step, req.aggregate_label(),
                                              std::string(metrics::metric_name(req.metric)), r, "reference_" + rc, rm));
              continue;
            }
            keep.emplace_back(target.run, target.step);
          }
        }
        const auto cells = compute_cells(req, *view, ref_view);
        emit_rows(req, r, run, step, cells, metrics::is_similarity(req.metric) ? &target : nullptr, series.rows);
      }
      cache.retain(keep);
    }
    cache.retain({});
  }
  std::stable_sort(series.rows.begin(), series.rows.end(), row_less);
  return series;
}

}  // namespace

Reference Reference::parse(std::string_view text) {
  Reference r;
  if (text == "previous") return r;
  if (text.starts_with("step:")) {
    r.mode = Mode::kStep;
    const auto num = text.substr(5);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), r.step);
    if (num.empty() || ec != std::errc() || ptr != num.data() + num.size() || r.step < 0) {
      throw ValidationError("reference '" + std::string(text) + "' needs a non-negative step");
    }
    return r;
  }
  if (text.starts_with("run:") && text.size() > 4) {
    r.mode = Mode::kRun;
    r.run = std::string(text.substr(4));
    store::validate_run_id(r.run);
    return r;
  }
  throw ValidationError("reference must be \"previous\", \"step:<k>\" or \"run:<id>\", got '" + std::string(text) + "'");
}

std::string Reference::text() const {
  switch (mode) {
    case Mode::kPrevious:
      return "previous";
    case Mode::kStep:
      return "step:" + std::to_string(step);
    case Mode::kRun:
      return "run:" + run;
  }
  return "";
}

std::string MetricRequest::aggregate_label() const {
  std::string s;
  for (const auto& c : components) {
    if (!s.empty()) s += "+";
    s += c.label();
  }
  return s;
}

AnalysisConfig parse_analysis_config(const json& j) {
  if (!j.is_object()) throw ValidationError("analysis config must be a table");
  reject_unknown_keys(j, {"run", "runs", "runs_dir", "output", "steps", "metrics"}, "analysis");
  AnalysisConfig c;
  if (j.contains("run") && j.contains("runs")) throw ValidationError("give either run or runs, not both");
  if (j.contains("run")) c.runs.push_back(string_field(j, "run", "analysis"));
  if (j.contains("runs")) {
    if (!j["runs"].is_array()) throw ValidationError("analysis.runs must be a list of run ids");
    for (const auto& r : j["runs"]) {
      if (!r.is_string()) throw ValidationError("analysis.runs must be a list of run ids");
      c.runs.push_back(r.get<std::string>());
    }
  }
  for (const auto& r : c.runs) store::validate_run_id(r);
  if (j.contains("runs_dir")) c.runs_dir = string_field(j, "runs_dir", "analysis");
  if (j.contains("output")) c.output = string_field(j, "output", "analysis");
  if (j.contains("steps")) {
    const json& s = j["steps"];
    if (!s.is_object()) throw ValidationError("[steps] must be a table");
    reject_unknown_keys(s, {"start", "end", "stride", "list"}, "steps");
    if (s.contains("start")) c.steps.start = int_field(s, "start", "steps");
    if (s.contains("end")) c.steps.end = int_field(s, "end", "steps");
    if (s.contains("stride")) c.steps.stride = int_field(s, "stride", "steps");
    if (c.steps.stride < 0) throw ValidationError("steps.stride must be >= 0");
    if (s.contains("list")) {
      if (!s["list"].is_array()) throw ValidationError("steps.list must be a list of integers");
      for (const auto& v : s["list"]) {
        if (!v.is_number_integer()) throw ValidationError("steps.list must be a list of integers");
        c.steps.list.push_back(v.get<std::int64_t>());
      }
    }
  }
  if (!j.contains("metrics") || !j["metrics"].is_array()) {
    throw ValidationError("analysis needs one or more [[metrics]] tables");
  }
  std::size_t index = 0;
  for (const auto& m : j["metrics"]) {
    const std::string where = "metrics[" + std::to_string(index++) + "]";
    if (!m.is_object()) throw ValidationError(where + " must be a table");
    reject_unknown_keys(m, {"metric", "data", "component", "components", "source", "aggregate", "reference", "options"},
                        where);
    MetricRequest req;
    if (!m.contains("metric")) throw ValidationError(where + " needs a metric");
    req.metric = metrics::parse_metric(string_field(m, "metric", where));
    const bool sim = metrics::is_similarity(req.metric);
    req.data_kind = m.contains("data") ? metrics::parse_data_kind(string_field(m, "data", where))
                                       : (sim ? metrics::DataKind::kActivations : metrics::DataKind::kWeights);
    metrics::require_admissible(req.metric, req.data_kind);
    if (m.contains("component") == m.contains("components")) {
      throw ValidationError(where + " needs exactly one of component or components");
    }
    if (m.contains("component")) {
      req.components.push_back(parse_component(m["component"], req.data_kind));
    } else {
      if (!m["components"].is_array() || m["components"].empty()) {
        throw ValidationError(where + ".components must be a non-empty list");
      }
      for (const auto& spec : m["components"]) req.components.push_back(parse_component(spec, req.data_kind));
    }
    if (m.contains("source")) req.source = parse_data_source(string_field(m, "source", where));
    if (m.contains("aggregate")) {
      const auto a = string_field(m, "aggregate", where);
      if (a == "mean") {
        req.aggregate = Aggregate::kMean;
      } else if (a != "none") {
        throw ValidationError(where + ".aggregate must be \"none\" or \"mean\"");
      }
    }
    if (m.contains("reference")) {
      if (!sim) throw ValidationError(where + ": reference applies only to similarity metrics");
      req.reference = Reference::parse(string_field(m, "reference", where));
    }
    if (m.contains("options")) {
      req.options = metrics::options_from_json(m["options"]);
      req.options_json = m["options"];
    }
    c.metrics.push_back(std::move(req));
  }
  return c;
}

AnalysisConfig parse_analysis_toml(std::string_view text, const std::string& source) {
  return parse_analysis_config(config::parse_toml_document(text, source));
}

AnalysisConfig load_analysis_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read analysis config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_analysis_toml(ss.str(), path.string());
}

fs::path resolve_analysis_runs_dir(const AnalysisConfig& config) {
  if (!config.runs_dir.empty()) return config.runs_dir;
  if (const char* env = std::getenv("DYNALAB_RUNS_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

std::vector<std::int64_t> select_steps(const StepSelection& sel, const std::vector<std::int64_t>& available) {
  std::vector<std::int64_t> out;
  if (!sel.list.empty()) {
    for (auto s : sel.list) {
      if (!std::binary_search(available.begin(), available.end(), s)) {
        throw ValidationError("step " + std::to_string(s) + " has no checkpoint");
      }
      out.push_back(s);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  for (auto s : available) {
    if (sel.start && s < *sel.start) continue;
    if (sel.end && s > *sel.end) continue;
    if (sel.stride > 1 && !out.empty() && (s - out.front()) % sel.stride != 0) continue;
    out.push_back(s);
  }
  if (out.empty()) throw ValidationError("empty step range: no checkpoint matches the [steps] selection");
  return out;
}

std::size_t MetricSeries::error_count() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const MetricRow& r) { return !r.error.empty(); }));
}

std::string MetricSeries::to_csv() const {
  std::string out = has_delta ? "run,step,component,metric,value,meta,delta\n" : "run,step,component,metric,value,meta\n";
  for (const auto& r : rows) {
    out += csv_field(r.run) + "," + std::to_string(r.step) + "," + csv_field(r.component) + "," + csv_field(r.metric) +
           "," + (r.error.empty() ? format_double(r.value) : "") + "," + csv_field(r.meta.dump());
    if (has_delta) out += "," + (r.delta ? format_double(*r.delta) : "");
    out += "\n";
  }
  return out;
}

json MetricSeries::to_json() const {
  json columns = {"run", "step", "component", "metric", "value", "meta"};
  if (has_delta) columns.push_back("delta");
  json rows_json = json::array();
  for (const auto& r : rows) {
    json row = {{"run", r.run}, {"step", r.step},   {"component", r.component}, {"metric", r.metric},
                {"meta", r.meta}, {"value", nullptr}};
    if (r.error.empty()) row["value"] = json_number(r.value);
    if (!r.error.empty()) row["error"] = r.error;
    if (has_delta) row["delta"] = r.delta ? json_number(*r.delta) : json(nullptr);
    rows_json.push_back(std::move(row));
  }
  return {{"columns", columns}, {"rows", rows_json}};
}

MetricSeries run_analysis(const AnalysisConfig& config, const store::CheckpointStore& store) {
  return analyze_validated(config, store, validate_analysis(config, store));
}

MetricSeries compare_runs(const std::string& run_a, const std::string& run_b, const AnalysisConfig& config,
                          const store::CheckpointStore& store) {
  AnalysisConfig ca = config;
  ca.runs = {run_a};
  AnalysisConfig cb = config;
  cb.runs = {run_b};
  const auto grid_a = validate_analysis(ca, store);
  const auto grid_b = validate_analysis(cb, store);
  const auto& sa = grid_a.at(run_a);
  const auto& sb = grid_b.at(run_b);
  if (sa != sb) {
    auto missing = [](const std::vector<std::int64_t>& want, const std::vector<std::int64_t>& have) {
      std::string list;
      for (auto s : want) {
        if (std::find(have.begin(), have.end(), s) != have.end()) continue;
        if (!list.empty()) list += ", ";
        list += std::to_string(s);
      }
      return list;
    };
    std::string msg = "runs do not share a step grid";
    if (const auto m = missing(sa, sb); !m.empty()) msg += "; run '" + run_b + "' is missing step(s) " + m;
    if (const auto m = missing(sb, sa); !m.empty()) msg += "; run '" + run_a + "' is missing step(s) " + m;
    throw ValidationError(msg);
  }
  MetricSeries a = analyze_validated(ca, store, grid_a);
  MetricSeries b = analyze_validated(cb, store, grid_b);

  using Key = std::tuple<std::int64_t, std::string, std::string, std::size_t>;
  std::map<Key, std::vector<std::size_t>> b_index;
  for (std::size_t i = 0; i < b.rows.size(); ++i) {
    const auto& r = b.rows[i];
    b_index[{r.step, r.component, r.metric, r.request}].push_back(i);
  }
  std::map<Key, std::size_t> seen;
  for (auto& r : a.rows) {
    const Key key{r.step, r.component, r.metric, r.request};
    const std::size_t nth = seen[key]++;
    const auto it = b_index.find(key);
    if (it == b_index.end() || nth >= it->second.size()) continue;
    MetricRow& other = b.rows[it->second[nth]];
    if (!r.error.empty() || !other.error.empty()) continue;
    const double d = r.value == other.value ? 0.0 : r.value - other.value;
    r.delta = d;
    other.delta = d;
  }
  MetricSeries out;
  out.has_delta = true;
  out.rows = std::move(a.rows);
  for (auto& r : b.rows) out.rows.push_back(std::move(r));
  const std::string first = run_a;
  std::stable_sort(out.rows.begin(), out.rows.end(), [&](const MetricRow& x, const MetricRow& y) {
    if (x.step != y.step) return x.step < y.step;
    if (x.component != y.component) return natural_less(x.component, y.component);
    if (x.metric != y.metric) return x.metric < y.metric;
    if (x.request != y.request) return x.request < y.request;
    return (x.run == first) && (y.run != first);
  });
  return out;
}

void write_series(const MetricSeries& series, const fs::path& csv_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  fs::path json_path = csv_path;
  json_path.replace_extension(".json");
  if (json_path == csv_path) json_path += ".json";
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    out << series.to_csv();
    if (!out) throw Error("cannot write " + csv_path.string());
  }
  {
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    out << series.to_json().dump(2) << "\n";
    if (!out) throw Error("cannot write " + json_path.string());
  }
}

bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      auto na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

}  // namespace dynalab::analysis
