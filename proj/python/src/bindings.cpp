// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dynalab/analysis/runner.hpp"
#include "dynalab/config/experiment.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/core/tensor.hpp"
#include "dynalab/data/dataset.hpp"
#include "dynalab/metrics/metrics.hpp"
#include "dynalab/store/checkpoint.hpp"
#include "dynalab/store/container.hpp"
#include "dynalab/train/trainer.hpp"

namespace py = pybind11;
using namespace dynalab;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Shape shape_of(const py::array& a) {
  Shape s;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) s.push_back(static_cast<std::size_t>(a.shape(i)));
  return s;
}

Matrix to_matrix(const F64Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Tensor to_tensor(const py::array& a) {
  const Shape shape = shape_of(a);
  if (py::isinstance<py::array_t<float>>(a)) {
    auto f = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(a);
    return Tensor::f32(shape, std::vector<float>(f.data(), f.data() + f.size()));
  }
  if (py::isinstance<py::array_t<std::uint32_t>>(a)) {
    auto u = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>::ensure(a);
    return Tensor::u32(shape, std::vector<std::uint32_t>(u.data(), u.data() + u.size()));
  }
  auto d = F64Array::ensure(a);
  if (!d) throw ValidationError("array must be convertible to float64");
  return Tensor::f64(shape, std::vector<double>(d.data(), d.data() + d.size()));
}

template <typename T>
py::array copy_out(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  const auto v = t.values<T>();
  std::copy(v.begin(), v.end(), out.mutable_data());
  return std::move(out);
}

py::array to_numpy(const Tensor& t) {
  switch (t.dtype()) {
    case DType::kF32:
      return copy_out<float>(t);
    case DType::kU32:
      return copy_out<std::uint32_t>(t);
    case DType::kF64:
      break;
  }
  return copy_out<double>(t);
}

py::tuple metric_result(const metrics::MetricValue& v) { return py::make_tuple(v.value, to_python(v.meta)); }

config::ExperimentConfig experiment(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  config::ExperimentConfig cfg;
  if (path) cfg = config::load_toml(*path);
  for (const auto& o : overrides) config::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

analysis::AnalysisConfig analysis_config(const std::string& path, const std::optional<std::string>& output,
                                         const std::optional<std::string>& runs_dir) {
  auto cfg = analysis::load_analysis_config(path);
  if (output) cfg.output = *output;
  if (runs_dir) cfg.runs_dir = *runs_dir;
  return cfg;
}

py::object finish_series(const analysis::MetricSeries& series, const analysis::AnalysisConfig& cfg) {
  if (!cfg.output.empty()) analysis::write_series(series, cfg.output);
  return to_python(series.to_json());
}

}  // namespace

PYBIND11_MODULE(_dynalab, m) {
  m.doc() = "Bindings for the dynalab training and learning-dynamics analysis library";

  // Registered base first: later registrations are tried first, so each
  // subclass maps to its own Python type.
  const auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<NotFoundError>(m, "NotFoundError", error);
  py::register_exception<IntegrityError>(m, "IntegrityError", error);
  py::register_exception<DataError>(m, "DataError", error);
  py::register_exception<MetricError>(m, "MetricError", error);

  // Metrics on plain arrays.
  m.def("gini", [](const F64Array& x) { return metrics::gini({x.data(), static_cast<std::size_t>(x.size())}).value; },
        py::arg("x"));
  m.def("hoyer", [](const F64Array& x) { return metrics::hoyer({x.data(), static_cast<std::size_t>(x.size())}).value; },
        py::arg("x"));
  m.def(
      "per",
      [](const F64Array& a, const std::string& divisor) {
        const auto d = from_python(py::dict(py::arg("per_divisor") = divisor));
        return metrics::per(to_matrix(a), metrics::options_from_json(d).per_divisor).value;
      },
      py::arg("a"), py::arg("divisor") = "min_dim");
  m.def("condition_number", [](const F64Array& a) { return metrics::condition_number(to_matrix(a)).value; },
        py::arg("a"));
  m.def("cka_linear", [](const F64Array& x, const F64Array& y) {
    return metrics::cka_linear(to_matrix(x), to_matrix(y)).value;
  }, py::arg("x"), py::arg("y"));
  m.def(
      "cka_rbf",
      [](const F64Array& x, const F64Array& y, double bandwidth) {
        return metrics::cka_rbf(to_matrix(x), to_matrix(y), bandwidth).value;
      },
      py::arg("x"), py::arg("y"), py::arg("bandwidth") = 1.0);
  m.def(
      "pwcca",
      [](const F64Array& x, const F64Array& y, double truncation) {
        return metrics::pwcca(to_matrix(x), to_matrix(y), truncation).value;
      },
      py::arg("x"), py::arg("y"), py::arg("truncation") = 1e-6);
  m.def(
      "norms",
      [](const F64Array& a, const std::string& infinity) {
        const auto o = metrics::options_from_json(from_python(py::dict(py::arg("infinity_norm") = infinity)));
        const auto n = metrics::norms(to_matrix(a), o.infinity_norm);
        return py::dict(py::arg("frobenius") = n.frobenius, py::arg("nuclear") = n.nuclear,
                        py::arg("infinity") = n.infinity);
      },
      py::arg("a"), py::arg("infinity") = "max_row_sum");
  m.def(
      "compute",
      [](const std::string& metric, const py::array& tensor, const std::string& data,
         const std::optional<py::array>& reference, const py::object& options) {
        const auto id = metrics::parse_metric(metric);
        const auto kind = metrics::parse_data_kind(data);
        const auto opts = metrics::options_from_json(from_python(options));
        if (metrics::is_similarity(id)) {
          if (!reference) throw ValidationError("metric '" + metric + "' needs a reference array");
          return metric_result(metrics::compute_similarity(id, kind, to_tensor(tensor), to_tensor(*reference), opts));
        }
        return metric_result(metrics::compute(id, kind, to_tensor(tensor), opts));
      },
      py::arg("metric"), py::arg("tensor"), py::arg("data") = "weights", py::arg("reference") = py::none(),
      py::arg("options") = py::none(), "Returns (value, meta) after the admissibility check.");
  m.def("metric_names", [] {
    std::vector<std::string> out;
    for (auto id : metrics::all_metrics()) out.emplace_back(metrics::metric_name(id));
    return out;
  });

  // Tensor containers and checkpoints.
  m.def(
      "read_tensors",
      [](const std::filesystem::path& path) {
        py::dict out;
        for (const auto& [name, t] : store::read_container(path)) out[py::str(name)] = to_numpy(t);
        return out;
      },
      py::arg("path"));
  m.def(
      "write_tensors",
      [](const std::filesystem::path& path, const py::dict& tensors) {
        TensorMap map;
        for (const auto& [k, v] : tensors) map[k.cast<std::string>()] = to_tensor(py::array::ensure(v));
        store::write_container(path, map);
      },
      py::arg("path"), py::arg("tensors"));
  m.def(
      "read_manifest",
      [](const std::filesystem::path& step_dir, bool verify) {
        return to_python(store::manifest_to_json(store::read_manifest_at(step_dir, verify)));
      },
      py::arg("step_dir"), py::arg("verify") = true);
  m.def(
      "list_steps", [](const std::filesystem::path& runs_dir, const std::string& run) {
        return store::CheckpointStore(runs_dir).list_steps(run);
      },
      py::arg("runs_dir"), py::arg("run"));

  // Workflow entry points mirroring the command-line tool.
  m.def(
      "preprocess",
      [](const std::filesystem::path& input, const std::filesystem::path& out, std::size_t seq_len,
         std::size_t shards, std::uint64_t seed) {
        data::PreprocessOptions o{input, out, seq_len, shards, seed};
        data::DatasetManifest mf;
        {
          py::gil_scoped_release release;
          mf = data::preprocess(o);
        }
        return py::dict(py::arg("tokenizer_id") = mf.tokenizer_id, py::arg("seq_len") = mf.seq_len,
                        py::arg("total_sequences") = mf.total_sequences, py::arg("total_tokens") = mf.total_tokens,
                        py::arg("dropped_tokens") = mf.dropped_tokens, py::arg("shards") = mf.shards.size());
      },
      py::arg("input"), py::arg("out"), py::arg("seq_len") = 128, py::arg("shards") = 10, py::arg("seed") = 42);
  m.def(
      "experiment_config",
      [](const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
        return to_python(experiment(path, overrides).to_json());
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Loads, overrides and validates an experiment config; returns it as a dict.");
  m.def(
      "train",
      [](const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
        const auto cfg = experiment(path, overrides);
        if (cfg.data.dataset_path.empty()) throw ValidationError("data.dataset_path is required");
        train::TrainResult r;
        {
          py::gil_scoped_release release;
          const auto dataset = data::load_dataset(cfg.data.dataset_path);
          store::CheckpointStore store(config::resolve_runs_dir(cfg));
          r = train::train(cfg, dataset, store);
        }
        py::list losses;
        for (const auto& s : r.log) losses.append(s.loss);
        return py::dict(py::arg("final_step") = r.final_step, py::arg("resumed_from") = r.resumed_from,
                        py::arg("checkpoints") = r.checkpoints_written, py::arg("losses") = losses);
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "analyze",
      [](const std::string& path, const std::optional<std::string>& output,
         const std::optional<std::string>& runs_dir) {
        const auto cfg = analysis_config(path, output, runs_dir);
        const store::CheckpointStore store(analysis::resolve_analysis_runs_dir(cfg));
        return finish_series(analysis::run_analysis(cfg, store), cfg);
      },
      py::arg("config"), py::arg("output") = py::none(), py::arg("runs_dir") = py::none(),
      "Runs an analysis config; returns the series and writes it when an output path is set.");
  m.def(
      "compare",
      [](const std::string& run_a, const std::string& run_b, const std::string& path,
         const std::optional<std::string>& output, const std::optional<std::string>& runs_dir) {
        const auto cfg = analysis_config(path, output, runs_dir);
        const store::CheckpointStore store(analysis::resolve_analysis_runs_dir(cfg));
        return finish_series(analysis::compare_runs(run_a, run_b, cfg, store), cfg);
      },
      py::arg("run_a"), py::arg("run_b"), py::arg("config"), py::arg("output") = py::none(),
      py::arg("runs_dir") = py::none());
}
