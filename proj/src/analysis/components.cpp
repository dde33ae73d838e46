// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/analysis/components.hpp"

#include <algorithm>
#include <charconv>

#include "dynalab/config/experiment.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/model/parameters.hpp"

namespace dynalab::analysis {

namespace {

const std::vector<std::string>& layer_sublayers() {
  static const std::vector<std::string> kNames = {
      "attn_norm.g", "attention.q_proj", "attention.k_proj", "attention.v_proj", "attention.o_proj",
      "mlp_norm.g",  "swiglu.w_0",       "swiglu.w_1",       "swiglu.w_2",
  };
  return kNames;
}

const std::vector<std::string>& global_parameters() {
  static const std::vector<std::string> kNames = {"embed.tok", "final_norm.g", "lm_head"};
  return kNames;
}

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::size_t parse_index(std::string_view text, std::string_view what) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ValidationError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

LayerSelection parse_layer_list(std::string_view text) {
  LayerSelection sel;
  if (text == "*") return sel;
  sel.all = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    sel.indices.push_back(parse_index(piece, "layer index"));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  if (std::adjacent_find(sel.indices.begin(), sel.indices.end()) != sel.indices.end()) {
    throw ValidationError("duplicate layer index in '" + std::string(text) + "'");
  }
  return sel;
}

LayerSelection layers_from_json(const nlohmann::json& j) {
  if (j.is_null()) return {};
  if (j.is_string()) return parse_layer_list(j.get<std::string>());
  if (j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    return parse_layer_list(std::to_string(j.get<std::int64_t>()));
  }
  if (j.is_array()) {
    std::string joined;
    for (const auto& v : j) {
      if (!(v.is_number_integer() && v.get<std::int64_t>() >= 0)) throw ValidationError("layers must be non-negative integers");
      if (!joined.empty()) joined += ",";
      joined += std::to_string(v.get<std::int64_t>());
    }
    if (joined.empty()) throw ValidationError("layers list is empty");
    return parse_layer_list(joined);
  }
  throw ValidationError("layers must be \"*\", an index or a list of indices");
}

std::string layers_text(const LayerSelection& sel) {
  if (sel.all) return "*";
  std::string s;
  for (std::size_t i : sel.indices) {
    if (!s.empty()) s += ",";
    s += std::to_string(i);
  }
  return s;
}

std::vector<std::size_t> selected_layers(const LayerSelection& sel, const model::ModelConfig& config) {
  if (!sel.all) return sel.indices;
  std::vector<std::size_t> out(config.n_layers);
  for (std::size_t i = 0; i < config.n_layers; ++i) out[i] = i;
  return out;
}

const Tensor& find_tensor(const TensorMap& map, const std::string& name, const std::string& file) {
  const auto it = map.find(name);
  if (it == map.end()) throw NotFoundError("tensor '" + name + "' is missing from " + file);
  return it->second;
}

}  // namespace

std::string_view data_source_name(DataSource source) { return source == DataSource::kTrain ? "train" : "eval"; }

DataSource parse_data_source(std::string_view name) {
  if (name == "train") return DataSource::kTrain;
  if (name == "eval") return DataSource::kEval;
  throw ValidationError("source must be \"train\" or \"eval\", got '" + std::string(name) + "'");
}

std::string ComponentSpec::label() const {
  if (kind == ComponentKind::kOvCircuit) {
    std::string s = "layers." + layers_text(layers) + ".ov_circuit";
    if (all_heads) s += ".head*";
    if (head) s += ".head" + std::to_string(*head);
    return s;
  }
  if (global) return sublayer;
  return "layers." + layers_text(layers) + "." + sublayer;
}

ComponentSpec parse_component_pattern(std::string_view pattern, metrics::DataKind kind) {
  ComponentSpec spec;
  spec.data_kind = kind;
  if (!pattern.starts_with("layers.")) {
    spec.global = true;
    spec.sublayer = std::string(pattern);
    spec.layers.all = false;
    return spec;
  }
  const auto rest = pattern.substr(7);
  const auto dot = rest.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == rest.size()) {
    throw ValidationError("component pattern '" + std::string(pattern) + "' must look like layers.<i|*>.<sublayer>");
  }
  spec.layers = parse_layer_list(rest.substr(0, dot));
  spec.sublayer = std::string(rest.substr(dot + 1));
  if (spec.sublayer == "ov_circuit") spec.kind = ComponentKind::kOvCircuit;
  return spec;
}

ComponentSpec parse_component(const nlohmann::json& j, metrics::DataKind kind) {
  if (j.is_string()) return parse_component_pattern(j.get<std::string>(), kind);
  if (!j.is_object()) throw ValidationError("component must be a pattern string or a table");
  ComponentSpec spec;
  spec.data_kind = kind;
  const std::string k = j.value("kind", std::string("simple"));
  for (const auto& [key, value] : j.items()) {
    static const std::vector<std::string> kKeys = {"kind", "layers", "sublayer", "head"};
    if (!contains(kKeys, key)) {
      const std::string guess = config::nearest(key, kKeys);
      throw ValidationError("unknown component key '" + key + "'" +
                            (guess.empty() ? "" : "; did you mean '" + guess + "'?"));
    }
  }
  spec.layers = layers_from_json(j.contains("layers") ? j["layers"] : nlohmann::json());
  if (k == "simple") {
    if (!j.contains("sublayer") || !j["sublayer"].is_string()) {
      throw ValidationError("simple component needs a sublayer string");
    }
    if (j.contains("head")) throw ValidationError("head applies only to ov_circuit components");
    spec.sublayer = j["sublayer"].get<std::string>();
  } else if (k == "ov_circuit") {
    spec.kind = ComponentKind::kOvCircuit;
    if (j.contains("sublayer")) throw ValidationError("ov_circuit components take no sublayer");
    if (j.contains("head")) {
      const auto& h = j["head"];
      if (h.is_string() && h.get<std::string>() == "*") {
        spec.all_heads = true;
      } else if (h.is_number_integer() && h.get<std::int64_t>() >= 0) {
        spec.head = static_cast<std::size_t>(h.get<std::int64_t>());
      } else {
        throw ValidationError("head must be a non-negative integer or \"*\"");
      }
    }
  } else {
    throw ValidationError("component kind must be \"simple\" or \"ov_circuit\", got '" + k + "'");
  }
  return spec;
}

void validate_component(const ComponentSpec& spec, const model::ModelConfig& config) {
  using metrics::DataKind;
  if (spec.kind == ComponentKind::kOvCircuit) {
    if (spec.data_kind != DataKind::kWeights) {
      throw ValidationError("ov_circuit components are built from weights, not " +
                            std::string(metrics::data_kind_name(spec.data_kind)));
    }
    if (spec.head && *spec.head >= config.n_heads) {
      throw ValidationError("head " + std::to_string(*spec.head) + " out of range; the model has " +
                            std::to_string(config.n_heads) + " heads");
    }
  } else if (spec.global) {
    if (!contains(global_parameters(), spec.sublayer)) {
      std::vector<std::string> all = global_parameters();
      for (const auto& s : layer_sublayers()) all.push_back("layers.*." + s);
      const std::string guess = config::nearest(spec.sublayer, all);
      throw ValidationError("component '" + spec.sublayer + "' matches nothing" +
                            (guess.empty() ? "" : "; did you mean '" + guess + "'?"));
    }
    if (spec.data_kind != DataKind::kWeights) {
      throw ValidationError("component '" + spec.sublayer + "' only has weights");
    }
  } else {
    if (!contains(layer_sublayers(), spec.sublayer)) {
      const std::string guess = config::nearest(spec.sublayer, layer_sublayers());
      throw ValidationError("unknown sublayer '" + spec.sublayer + "'" +
                            (guess.empty() ? "" : "; did you mean '" + guess + "'?"));
    }
    if (spec.data_kind != DataKind::kWeights && !contains(model::capturable_sublayers(), spec.sublayer)) {
      throw ValidationError("sublayer '" + spec.sublayer + "' has no captured " +
                            std::string(metrics::data_kind_name(spec.data_kind)));
    }
  }
  if (!spec.global) {
    for (std::size_t i : spec.layers.indices) {
      if (i >= config.n_layers) {
        throw ValidationError("component '" + spec.label() + "' matches nothing: layer " + std::to_string(i) +
                              " out of range (model has " + std::to_string(config.n_layers) + " layers)");
      }
    }
    if (config.n_layers == 0) throw ValidationError("component '" + spec.label() + "' matches nothing");
  }
}

std::size_t kv_head_for(std::size_t head, const model::ModelConfig& config) { return head / config.group_size(); }

Matrix ov_circuit_head(const Matrix& o_proj, const Matrix& v_proj, const model::ModelConfig& config, std::size_t head) {
  const std::size_t d = config.d_model;
  const std::size_t hd = config.head_dim();
  if (head >= config.n_heads) {
    throw ValidationError("head " + std::to_string(head) + " out of range; the model has " +
                          std::to_string(config.n_heads) + " heads");
  }
  if (o_proj.rows() != d || o_proj.cols() != config.n_heads * hd || v_proj.rows() != config.n_kv_heads * hd ||
      v_proj.cols() != d) {
    throw DimensionError("ov circuit: projection shapes do not match the model config");
  }
  const std::size_t kv = kv_head_for(head, config);
  Matrix o_h(d, hd);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t c = 0; c < hd; ++c) o_h(i, c) = o_proj(i, head * hd + c);
  Matrix v_h(hd, d);
  for (std::size_t c = 0; c < hd; ++c)
    for (std::size_t j = 0; j < d; ++j) v_h(c, j) = v_proj(kv * hd + c, j);
  return matmul(o_h, v_h);
}

Matrix ov_circuit_layer(const Matrix& o_proj, const Matrix& v_proj, const model::ModelConfig& config) {
  Matrix total(config.d_model, config.d_model);
  for (std::size_t h = 0; h < config.n_heads; ++h) add_inplace(total, ov_circuit_head(o_proj, v_proj, config, h));
  return total;
}

model::ModelConfig model_config_of(const store::CheckpointManifest& manifest) {
  if (!manifest.config.is_object() || !manifest.config.contains("model")) {
    throw IntegrityError("checkpoint manifest carries no model config");
  }
  nlohmann::json j = nlohmann::json::object();
  j["model"] = manifest.config["model"];
  return config::ExperimentConfig::from_json(j).model;
}

std::vector<ResolvedComponent> resolve_simple(const ComponentSpec& spec, const CheckpointView& view,
                                              DataSource source) {
  using metrics::DataKind;
  validate_component(spec, view.config);
  const store::Checkpoint& ck = *view.checkpoint;
  const TensorMap* map = &ck.model;
  std::string file = "model.tensors";
  if (spec.data_kind != DataKind::kWeights) {
    if (!ck.dynamics) {
      throw NotFoundError("checkpoint step " + std::to_string(ck.manifest.step) + " has no learning-dynamics " +
                          std::string(metrics::data_kind_name(spec.data_kind)));
    }
    const bool train = source == DataSource::kTrain;
    const bool act = spec.data_kind == DataKind::kActivations;
    map = act ? (train ? &ck.dynamics->train_activations : &ck.dynamics->eval_activations)
              : (train ? &ck.dynamics->train_gradients : &ck.dynamics->eval_gradients);
    file = std::string("learning_dynamics/") + (train ? "train_" : "eval_") + (act ? "activations" : "gradients") +
           ".tensors";
  }
  std::vector<ResolvedComponent> out;
  if (spec.global) {
    ResolvedComponent r;
    r.step = ck.manifest.step;
    r.label = spec.sublayer;
    r.tensor = find_tensor(*map, spec.sublayer, file);
    r.provenance = {file + ":" + spec.sublayer};
    out.push_back(std::move(r));
    return out;
  }
  for (std::size_t layer : selected_layers(spec.layers, view.config)) {
    const std::string name = model::layer_name(layer, spec.sublayer);
    const auto it = map->find(name);
    if (it == map->end()) {
      throw NotFoundError("checkpoint step " + std::to_string(ck.manifest.step) + " did not capture " +
                          std::string(metrics::data_kind_name(spec.data_kind)) + " for '" + name + "'");
    }
    ResolvedComponent r;
    r.step = ck.manifest.step;
    r.layer = layer;
    r.label = name;
    r.tensor = it->second;
    r.provenance = {file + ":" + name};
    if (spec.data_kind != DataKind::kWeights) r.meta["source"] = data_source_name(source);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ResolvedComponent> resolve_ov_circuit(const ComponentSpec& spec, const CheckpointView& view) {
  validate_component(spec, view.config);
  const store::Checkpoint& ck = *view.checkpoint;
  const model::ModelConfig& c = view.config;
  std::vector<ResolvedComponent> out;
  for (std::size_t layer : selected_layers(spec.layers, c)) {
    const std::string o_name = model::layer_name(layer, "attention.o_proj");
    const std::string v_name = model::layer_name(layer, "attention.v_proj");
    const Matrix o = find_tensor(ck.model, o_name, "model.tensors").as_matrix();
    const Matrix v = find_tensor(ck.model, v_name, "model.tensors").as_matrix();
    std::vector<std::optional<std::size_t>> heads;
    if (spec.all_heads) {
      for (std::size_t h = 0; h < c.n_heads; ++h) heads.emplace_back(h);
    } else {
      heads.push_back(spec.head);
    }
    for (const auto& head : heads) {
      ResolvedComponent r;
      r.step = ck.manifest.step;
      r.layer = layer;
      r.head = head;
      r.label = "layers." + std::to_string(layer) + ".ov_circuit" + (head ? ".head" + std::to_string(*head) : "");
      r.tensor = Tensor::from_matrix(head ? ov_circuit_head(o, v, c, *head) : ov_circuit_layer(o, v, c));
      r.provenance = {"model.tensors:" + o_name, "model.tensors:" + v_name};
      r.meta["orientation"] = "o_proj*v_proj";
      r.meta["gqa"] = "kv value block replicated across its query-head group";
      if (head) {
        r.meta["kv_head"] = kv_head_for(*head, c);
      } else {
        r.meta["heads"] = "sum over heads in index order";
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ResolvedComponent> resolve(const ComponentSpec& spec, const CheckpointView& view, DataSource source) {
  return spec.kind == ComponentKind::kOvCircuit ? resolve_ov_circuit(spec, view) : resolve_simple(spec, view, source);
}

}  // namespace dynalab::analysis
