// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynalab/core/matrix.hpp"
#include "dynalab/core/tensor.hpp"
#include "dynalab/metrics/metrics.hpp"
#include "dynalab/model/config.hpp"
#include "dynalab/store/checkpoint.hpp"

namespace dynalab::analysis {

enum class ComponentKind { kSimple, kOvCircuit };
enum class DataSource { kTrain, kEval };

std::string_view data_source_name(DataSource source);
DataSource parse_data_source(std::string_view name);

/// Which layers a spec covers: every layer, or an explicit ascending list.
struct LayerSelection {
  bool all = true;
  std::vector<std::size_t> indices;
};

struct ComponentSpec {
  ComponentKind kind = ComponentKind::kSimple;
  /// Simple: a per-layer sublayer such as "attention.v_proj", or a full
  /// parameter name outside the layers ("lm_head") when `global` is set.
  std::string sublayer;
  bool global = false;
  LayerSelection layers;
  metrics::DataKind data_kind = metrics::DataKind::kWeights;
  /// OV circuit only: a single head, every head separately (all_heads), or
  /// neither for the whole-layer circuit.
  std::optional<std::size_t> head;
  bool all_heads = false;

  /// Stable text form used in output rows, e.g. "layers.*.attention.v_proj".
  std::string label() const;
};

/// Accepts "layers.*.attention.v_proj", "layers.3.swiglu.w_2",
/// "layers.0,2.attention.o_proj", or a bare parameter name such as "lm_head".
ComponentSpec parse_component_pattern(std::string_view pattern, metrics::DataKind kind);
/// Accepts a pattern string or a table:
/// { kind = "simple" | "ov_circuit", layers = "*" | k | [k, ...], sublayer = "...", head = k | "*" }.
ComponentSpec parse_component(const nlohmann::json& j, metrics::DataKind kind);

/// Checks the spec against a model: layer indices, sublayer names, head range
/// and the data-kind rules. Throws ValidationError.
void validate_component(const ComponentSpec& spec, const model::ModelConfig& config);

struct ResolvedComponent {
  std::int64_t step = 0;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
  std::string label;  // concrete, e.g. "layers.1.attention.v_proj" or "layers.1.ov_circuit.head0"
  Tensor tensor;
  std::vector<std::string> provenance;  // "<file>:<tensor>" for every source tensor
  nlohmann::json meta = nlohmann::json::object();
};

/// Per-head circuit O_h · V_kv(h), d_model × d_model. o_proj is
/// d_model × (n_heads·head_dim); v_proj is (n_kv_heads·head_dim) × d_model.
Matrix ov_circuit_head(const Matrix& o_proj, const Matrix& v_proj, const model::ModelConfig& config, std::size_t head);
/// Whole-layer circuit: the per-head circuits summed in head order.
Matrix ov_circuit_layer(const Matrix& o_proj, const Matrix& v_proj, const model::ModelConfig& config);
/// The kv head serving query head h under grouped-query attention.
std::size_t kv_head_for(std::size_t head, const model::ModelConfig& config);

/// A read-only checkpoint plus the model shape it was written with.
struct CheckpointView {
  const store::Checkpoint* checkpoint = nullptr;
  model::ModelConfig config;
};

/// Reads the model config recorded in a manifest.
model::ModelConfig model_config_of(const store::CheckpointManifest& manifest);

/// One entry per matched layer (and head), in layer order. Throws NotFoundError
/// when the requested data kind is absent from this checkpoint.
std::vector<ResolvedComponent> resolve(const ComponentSpec& spec, const CheckpointView& view,
                                       DataSource source = DataSource::kTrain);
std::vector<ResolvedComponent> resolve_simple(const ComponentSpec& spec, const CheckpointView& view,
                                              DataSource source = DataSource::kTrain);
std::vector<ResolvedComponent> resolve_ov_circuit(const ComponentSpec& spec, const CheckpointView& view);

}  // namespace dynalab::analysis
