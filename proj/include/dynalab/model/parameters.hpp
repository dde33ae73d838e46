// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dynalab/core/matrix.hpp"
#include "dynalab/core/tensor.hpp"
#include "dynalab/model/config.hpp"

namespace dynalab::model {

struct ParamInfo {
  std::string name;
  Shape shape;       // canonical storage shape; gains are rank-1
  std::size_t rows;  // working Matrix shape
  std::size_t cols;
  bool decay;        // subject to decoupled weight decay
  bool is_gain;
};

/// Canonical parameter names, in initialization order. A pure function of
/// the config: embed.tok, then per layer attn_norm.g, attention.{q,k,v,o}_proj,
/// mlp_norm.g, swiglu.w_{0,1,2}, then final_norm.g and lm_head.
std::vector<ParamInfo> parameter_layout(const ModelConfig& config);

std::string layer_name(std::size_t layer, std::string_view sublayer);

/// Weights of all linear maps are stored (out × in); y = x · Wᵀ.
class Parameters {
 public:
  using Map = std::map<std::string, Matrix, std::less<>>;

  Parameters() = default;

  /// normal(0, init_std) for projections and embeddings, ones for gains.
  static Parameters initialize(const ModelConfig& config, std::uint64_t seed, double init_std = 0.02);
  static Parameters zeros(const ModelConfig& config);
  static Parameters zeros_like(const Parameters& other);

  const Matrix& at(std::string_view name) const;
  Matrix& at(std::string_view name);
  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  void set(std::string name, Matrix value) { tensors_[std::move(name)] = std::move(value); }

  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;
  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  /// FNV-1a over names and value bytes; used to detect stale traces.
  std::uint64_t fingerprint() const;

  TensorMap to_tensors(const ModelConfig& config) const;
  static Parameters from_tensors(const TensorMap& tensors, const ModelConfig& config);

  bool operator==(const Parameters& other) const { return tensors_ == other.tensors_; }

 private:
  Map tensors_;
};

}  // namespace dynalab::model
