// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

#include "dynalab/core/tensor.hpp"
#include "dynalab/model/parameters.hpp"

namespace dynalab::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

/// Norm gains ("*.g") and the token embedding are exempt from weight decay.
bool decay_applies(std::string_view parameter_name);

struct OptimizerState {
  model::Parameters m;
  model::Parameters v;
  std::int64_t t = 0;

  static OptimizerState zeros_like(const model::Parameters& params);

  /// "m.<name>", "v.<name>" in canonical parameter shapes, plus "state.t" (f64 [1]).
  TensorMap to_tensors(const model::ModelConfig& config) const;
  static OptimizerState from_tensors(const TensorMap& tensors, const model::ModelConfig& config);

  bool operator==(const OptimizerState&) const = default;
};

/// One decoupled AdamW update. t is incremented first, then
///   m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²,
///   θ ← θ − lr·m̂/(√v̂ + eps) − lr·λ·θ
/// with m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ). A non-finite gradient throws
/// TrainingError naming the tensor before anything is modified.
void adamw_step(model::Parameters& params, const model::Parameters& grads, OptimizerState& state, double lr,
                const AdamWConfig& config);

/// Scales every gradient so the global L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_global_norm(model::Parameters& grads, double max_norm);

enum class Schedule { kLinearWithWarmup, kConstantAfterWarmup };

struct ScheduleConfig {
  double lr_peak = 3e-4;
  std::int64_t warmup_steps = 2500;
  std::int64_t max_steps = 200000;
  Schedule kind = Schedule::kLinearWithWarmup;
};

/// Linear ramp 0 → lr_peak over [0, warmup], then linear decay to 0 at
/// max_steps (or constant for kConstantAfterWarmup). Throws ValidationError
/// outside [0, max_steps].
double lr_at(std::int64_t step, const ScheduleConfig& config);

}  // namespace dynalab::train
