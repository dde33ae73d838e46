// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/train/optimizer.hpp"

#include <cmath>

#include "dynalab/core/error.hpp"

namespace dynalab::train {

bool decay_applies(std::string_view name) { return !(name.ends_with(".g") || name.starts_with("embed.")); }

OptimizerState OptimizerState::zeros_like(const model::Parameters& params) {
  return {model::Parameters::zeros_like(params), model::Parameters::zeros_like(params), 0};
}

TensorMap OptimizerState::to_tensors(const model::ModelConfig& config) const {
  TensorMap out;
  for (auto& [name, t] : m.to_tensors(config)) out.emplace("m." + name, std::move(t));
  for (auto& [name, t] : v.to_tensors(config)) out.emplace("v." + name, std::move(t));
  out.emplace("state.t", Tensor::f64({1}, {static_cast<double>(t)}));
  return out;
}

OptimizerState OptimizerState::from_tensors(const TensorMap& tensors, const model::ModelConfig& config) {
  TensorMap m_part, v_part;
  const Tensor* step = nullptr;
  for (const auto& [name, t] : tensors) {
    if (name.starts_with("m.")) {
      m_part.emplace(name.substr(2), t);
    } else if (name.starts_with("v.")) {
      v_part.emplace(name.substr(2), t);
    } else if (name == "state.t") {
      step = &t;
    } else {
      throw IntegrityError("unexpected optimizer tensor '" + name + "'");
    }
  }
  if (step == nullptr || step->dtype() != DType::kF64 || step->elements() != 1) {
    throw IntegrityError("optimizer state lacks a valid 'state.t'");
  }
  OptimizerState s;
  s.m = model::Parameters::from_tensors(m_part, config);
  s.v = model::Parameters::from_tensors(v_part, config);
  const double t = step->values<double>()[0];
  if (!(t >= 0.0) || t != std::floor(t)) throw IntegrityError("optimizer step count is not a whole number");
  s.t = static_cast<std::int64_t>(t);
  return s;
}

void adamw_step(model::Parameters& params, const model::Parameters& grads, OptimizerState& state, double lr,
                const AdamWConfig& c) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name) || !state.m.contains(name) || !state.v.contains(name)) {
      throw TrainingError("gradient for unknown parameter '" + name + "'");
    }
    const Matrix& p = params.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw DimensionError("gradient shape mismatch for '" + name + "'");
    for (double x : g.values()) {
      if (!std::isfinite(x)) throw TrainingError("non-finite gradient in '" + name + "'; step aborted");
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& [name, g] : grads) {
    auto theta = params.at(name).values();
    auto m = state.m.at(name).values();
    auto v = state.v.at(name).values();
    const auto gv = g.values();
    const double lambda = decay_applies(name) ? c.weight_decay : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gv[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gv[i] * gv[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] = theta[i] - lr * (m_hat / (std::sqrt(v_hat) + c.eps)) - lr * lambda * theta[i];
    }
  }
}

double clip_global_norm(model::Parameters& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.values()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g.values()) x *= s;
    }
  }
  return norm;
}

double lr_at(std::int64_t step, const ScheduleConfig& c) {
  if (step < 0 || step > c.max_steps) {
    throw ValidationError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(c.max_steps) + "]");
  }
  const double s = static_cast<double>(step);
  if (step <= c.warmup_steps) {
    return c.warmup_steps == 0 ? c.lr_peak : c.lr_peak * s / static_cast<double>(c.warmup_steps);
  }
  if (c.kind == Schedule::kConstantAfterWarmup) return c.lr_peak;
  return c.lr_peak * static_cast<double>(c.max_steps - step) / static_cast<double>(c.max_steps - c.warmup_steps);
}

}  // namespace dynalab::train
