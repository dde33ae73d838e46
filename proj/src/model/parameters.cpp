// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/model/parameters.hpp"

#include <cstring>

#include "dynalab/core/error.hpp"
#include "dynalab/core/rng.hpp"

namespace dynalab::model {

std::string layer_name(std::size_t layer, std::string_view sublayer) {
  return "layers." + std::to_string(layer) + "." + std::string(sublayer);
}

std::vector<ParamInfo> parameter_layout(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  const std::size_t hd = c.head_dim();
  std::vector<ParamInfo> out;
  auto matrix = [&](std::string name, std::size_t r, std::size_t cols, bool decay) {
    out.push_back({std::move(name), Shape{r, cols}, r, cols, decay, false});
  };
  auto gain = [&](std::string name) {
    out.push_back({std::move(name), Shape{d}, 1, d, false, true});
  };
  matrix("embed.tok", c.vocab_size, d, false);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    gain(layer_name(i, "attn_norm.g"));
    matrix(layer_name(i, "attention.q_proj"), c.n_heads * hd, d, true);
    matrix(layer_name(i, "attention.k_proj"), c.n_kv_heads * hd, d, true);
    matrix(layer_name(i, "attention.v_proj"), c.n_kv_heads * hd, d, true);
    matrix(layer_name(i, "attention.o_proj"), d, c.n_heads * hd, true);
    gain(layer_name(i, "mlp_norm.g"));
    matrix(layer_name(i, "swiglu.w_0"), c.d_ff, d, true);
    matrix(layer_name(i, "swiglu.w_1"), c.d_ff, d, true);
    matrix(layer_name(i, "swiglu.w_2"), d, c.d_ff, true);
  }
  gain("final_norm.g");
  matrix("lm_head", c.vocab_size, d, true);
  return out;
}

Parameters Parameters::initialize(const ModelConfig& config, std::uint64_t seed, double init_std) {
  Rng rng(seed);
  Parameters p;
  for (const auto& info : parameter_layout(config)) {
    Matrix m(info.rows, info.cols);
    if (info.is_gain) {
      m.fill(1.0);
    } else {
      for (double& v : m.values()) v = rng.normal(0.0, init_std);
    }
    p.tensors_.emplace(info.name, std::move(m));
  }
  return p;
}

Parameters Parameters::zeros(const ModelConfig& config) {
  Parameters p;
  for (const auto& info : parameter_layout(config)) {
    p.tensors_.emplace(info.name, Matrix(info.rows, info.cols));
  }
  return p;
}

Parameters Parameters::zeros_like(const Parameters& other) {
  Parameters p;
  for (const auto& [name, m] : other.tensors_) p.tensors_.emplace(name, Matrix(m.rows(), m.cols()));
  return p;
}

const Matrix& Parameters::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw NotFoundError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

Matrix& Parameters::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw NotFoundError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : tensors_) n += m.size();
  return n;
}

std::uint64_t Parameters::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [name, m] : tensors_) {
    mix(name.data(), name.size());
    mix(m.data(), m.size() * sizeof(double));
  }
  return h;
}

TensorMap Parameters::to_tensors(const ModelConfig& config) const {
  TensorMap out;
  for (const auto& info : parameter_layout(config)) {
    out.emplace(info.name, Tensor::from_matrix(at(info.name), info.shape));
  }
  return out;
}

Parameters Parameters::from_tensors(const TensorMap& tensors, const ModelConfig& config) {
  Parameters p;
  const auto layout = parameter_layout(config);
  if (tensors.size() != layout.size()) {
    throw IntegrityError("parameter set has " + std::to_string(tensors.size()) +
                         " tensors, model config expects " + std::to_string(layout.size()));
  }
  for (const auto& info : layout) {
    auto it = tensors.find(info.name);
    if (it == tensors.end()) throw IntegrityError("missing parameter tensor '" + info.name + "'");
    const Tensor& t = it->second;
    if (t.shape() != info.shape || t.dtype() != DType::kF64) {
      throw IntegrityError("parameter '" + info.name + "' has shape " + shape_string(t.shape()) +
                           ", expected f64 " + shape_string(info.shape));
    }
    p.tensors_.emplace(info.name, Matrix(info.rows, info.cols, t.to_f64()));
  }
  return p;
}

}  // namespace dynalab::model
