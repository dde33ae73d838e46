// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dynalab/core/matrix.hpp"
#include "dynalab/core/tensor.hpp"
#include "dynalab/core/tokens.hpp"
#include "dynalab/model/config.hpp"
#include "dynalab/model/parameters.hpp"

namespace dynalab::model {

// ---------------------------------------------------------------------------
// Building blocks. These are the same routines forward() uses.

/// y_i = g_i · x_i / sqrt(mean(x²) + eps)
std::vector<double> rmsnorm(std::span<const double> x, std::span<const double> gain, double eps);

/// Rotates coordinate pairs (x[2i], x[2i+1]) of row r by positions[r] · theta^(-2i/head_dim).
/// x is (seq × head_dim).
Matrix rope_rotate(const Matrix& x, std::span<const std::size_t> positions, double theta);

double silu(double z);

/// y = W2 · (silu(W0 · x) ⊙ (W1 · x))
std::vector<double> swiglu(std::span<const double> x, const Matrix& w0, const Matrix& w1,
                           const Matrix& w2);

struct AttentionWeights {
  const Matrix& q_proj;
  const Matrix& k_proj;
  const Matrix& v_proj;
  const Matrix& o_proj;
};

struct AttentionOutput {
  Matrix output;  // (batch·seq) × d_model, o_proj applied
  Matrix q;       // projections before RoPE
  Matrix k;
  Matrix v;
  Matrix context;  // concatenated heads before o_proj
};

/// Causal grouped-query attention over x laid out as (batch·seq) × d_model.
/// Query head h reads kv head h / (n_heads / n_kv_heads).
AttentionOutput gqa_attention(const Matrix& x, std::size_t batch, const AttentionWeights& weights,
                              const ModelConfig& config);

// ---------------------------------------------------------------------------
// Whole-model passes.

namespace detail {

struct LayerCache {
  Matrix h_in;
  std::vector<double> attn_rinv;
  Matrix a;
  Matrix q;  // post-RoPE
  Matrix k;  // post-RoPE
  Matrix v;
  std::vector<Matrix> probs;  // one (seq × seq) per (batch, head), lower triangle
  Matrix ctx;
  Matrix h_mid;
  std::vector<double> mlp_rinv;
  Matrix m;
  Matrix gate;
  Matrix up;
  Matrix act;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix h_final;
  std::vector<double> final_rinv;
  Matrix normed;
  Matrix probs;  // softmax(logits)
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> targets;
};

}  // namespace detail

struct ForwardTrace {
  std::size_t batch = 0;
  std::size_t seq = 0;
  double loss = 0.0;
  Matrix logits;  // (batch·seq) × vocab
  /// `layers.{i}.<sublayer>` → (batch, seq, out_dim)
  TensorMap activations;
  std::uint64_t params_fingerprint = 0;
  detail::ForwardCache cache;
};

struct Gradients {
  Parameters params;
  /// Weight gradients of the capture-list sublayers, keyed like activations.
  TensorMap captured;
};

/// tokens is (batch, seq + 1): inputs are columns [0, seq), targets [1, seq].
/// loss is the mean next-token cross-entropy over every position.
ForwardTrace forward(const TokenBatch& tokens, const Parameters& params, const ModelConfig& config,
                     const std::vector<std::string>& capture_list = {});

/// Gradient of loss_scale · trace.loss with respect to every parameter.
/// Throws TrainingError if params changed since the trace was produced.
Gradients backward(const ForwardTrace& trace, const Parameters& params, const ModelConfig& config,
                   const std::vector<std::string>& capture_list = {}, double loss_scale = 1.0);

/// Sum of next-token negative log-likelihoods and the token count.
struct NllSum {
  double total = 0.0;
  std::size_t tokens = 0;
};
NllSum negative_log_likelihood(const TokenBatch& tokens, const Parameters& params,
                               const ModelConfig& config);

}  // namespace dynalab::model
