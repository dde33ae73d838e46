// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dynalab::model {

/// Decoder hyperparameters. Defaults are the pico-decoder defaults.
struct ModelConfig {
  std::size_t d_model = 768;
  std::size_t n_layers = 12;
  std::size_t vocab_size = 50304;
  std::size_t seq_len = 2048;
  std::size_t n_heads = 12;
  std::size_t n_kv_heads = 4;
  std::size_t d_ff = 3072;
  double norm_eps = 1e-6;
  double rope_theta = 10000.0;

  std::size_t head_dim() const { return d_model / n_heads; }
  /// Query heads per kv head.
  std::size_t group_size() const { return n_heads / n_kv_heads; }

  /// Throws ValidationError on divisibility or parity violations.
  void validate() const;

  /// 2 layers, d_model 8, 2 heads sharing 1 kv head, d_ff 16, vocab 32, seq 8.
  static ModelConfig tiny();

  bool operator==(const ModelConfig&) const = default;
};

/// Sublayer names whose outputs (activations) and weight gradients can be
/// captured at checkpoints.
const std::vector<std::string>& capturable_sublayers();

/// The default capture targets.
std::vector<std::string> default_capture_list();

void validate_capture_list(const std::vector<std::string>& capture_list);

}  // namespace dynalab::model
