// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/model/config.hpp"

#include <algorithm>
#include <set>

#include "dynalab/core/error.hpp"

namespace dynalab::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (d_model == 0 || n_layers == 0 || vocab_size == 0 || seq_len == 0 || d_ff == 0) {
    fail("d_model, n_layers, vocab_size, seq_len and d_ff must be positive");
  }
  if (n_heads == 0 || n_kv_heads == 0) fail("n_heads and n_kv_heads must be positive");
  if (n_heads % n_kv_heads != 0) {
    fail("n_heads (" + std::to_string(n_heads) + ") must be divisible by n_kv_heads (" +
         std::to_string(n_kv_heads) + ")");
  }
  if (d_model % n_heads != 0) {
    fail("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
         std::to_string(n_heads) + ")");
  }
  if (head_dim() % 2 != 0) fail("head dim " + std::to_string(head_dim()) + " must be even for RoPE");
  if (!(norm_eps >= 0.0)) fail("norm_eps must be non-negative");
  if (!(rope_theta > 0.0)) fail("rope_theta must be positive");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.vocab_size = 32;
  c.seq_len = 8;
  c.n_heads = 2;
  c.n_kv_heads = 1;
  c.d_ff = 16;
  return c;
}

const std::vector<std::string>& capturable_sublayers() {
  static const std::vector<std::string> kNames = {
      "attention.q_proj", "attention.k_proj", "attention.v_proj", "attention.o_proj",
      "swiglu.w_0",       "swiglu.w_1",       "swiglu.w_2",
  };
  return kNames;
}

std::vector<std::string> default_capture_list() {
  return {"attention.v_proj", "attention.o_proj", "swiglu.w_2"};
}

void validate_capture_list(const std::vector<std::string>& capture_list) {
  const auto& known = capturable_sublayers();
  std::set<std::string> seen;
  for (const auto& name : capture_list) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ValidationError("capture list: unknown sublayer '" + name + "'");
    }
    if (!seen.insert(name).second) throw ValidationError("capture list: duplicate '" + name + "'");
  }
}

}  // namespace dynalab::model
