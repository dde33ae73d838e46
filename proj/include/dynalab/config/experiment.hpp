// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynalab/model/config.hpp"

namespace dynalab::config {

struct TrainingSection {
  std::string optimizer = "adamw";
  double lr_peak = 3e-4;
  std::string lr_scheduler = "linear_with_warmup";  // or "constant_after_warmup"
  std::int64_t warmup_steps = 2500;
  std::int64_t grad_accum_steps = 128;
  std::int64_t max_steps = 200000;
  std::string precision = "f64";
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.1;
  double grad_clip = 0.0;  // global-norm threshold; 0 disables
  double init_std = 0.02;
  std::uint64_t seed = 42;
  std::int64_t stop_at_step = 0;  // 0 runs to max_steps
};

struct DataSection {
  std::string dataset_path;
  /// Sequences per optimizer step; split evenly across grad_accum_steps.
  std::int64_t batch_size = 1024;
  std::string tokenizer = "byte-level";
  std::int64_t holdout_shards = 1;  // 0 evaluates on the training shards
  std::int64_t max_epochs = 0;      // 0 is unlimited
};

struct CheckpointingSection {
  std::string run_name = "default";
  bool auto_resume = true;
  std::int64_t checkpoint_every = 1000;
  std::vector<std::string> capture_list = model::default_capture_list();
  bool capture_eval = true;
  bool save_final = false;
  bool reproducible_timestamps = false;
  std::string runs_dir;  // empty uses DYNALAB_RUNS_DIR or ./runs
};

struct EvaluationSection {
  std::vector<std::string> metrics = {"perplexity"};
  std::int64_t eval_batch_size = 16;
  std::int64_t max_eval_batches = 0;  // 0 uses every held-out sequence
  std::int64_t eval_every = 1000;
};

struct MonitoringSection {
  std::string logging_level = "INFO";
  std::int64_t log_every = 100;
};

struct ExperimentConfig {
  std::string model_type = "pico_decoder";
  model::ModelConfig model;
  TrainingSection training;
  DataSection data;
  CheckpointingSection checkpointing;
  EvaluationSection evaluation;
  MonitoringSection monitoring;

  /// Cross-field checks; throws ValidationError.
  void validate() const;

  std::int64_t micro_batch_size() const { return data.batch_size / training.grad_accum_steps; }

  /// Every key, as {"section": {"key": value}}.
  nlohmann::json to_json() const;
  /// Keys that shape the training trajectory; run-control keys (paths, logging,
  /// stop/resume flags) are left out so a resumed run records identical bytes.
  nlohmann::json trajectory_json() const;
  /// SHA-256 of trajectory_json() in compact form.
  std::string digest() const;

  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// TOML text as JSON: tables become objects, arrays of tables arrays of
/// objects. Dates and times are rejected. Throws ValidationError.
nlohmann::json parse_toml_document(std::string_view text, const std::string& source = "<string>");

/// Parses TOML text; unknown keys throw ValidationError with a suggestion.
ExperimentConfig parse_toml(std::string_view text, const std::string& source = "<string>");
ExperimentConfig load_toml(const std::filesystem::path& path);

/// Applies `section.key=value`, type-checked against the schema.
void apply_override(ExperimentConfig& config, std::string_view assignment);

std::vector<std::string> known_keys();

/// Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);
/// Closest candidate; empty when nothing is reasonably close.
std::string nearest(std::string_view word, const std::vector<std::string>& candidates);

/// DYNALAB_RUNS_DIR, else ./runs, unless the config names one.
std::filesystem::path resolve_runs_dir(const ExperimentConfig& config);

}  // namespace dynalab::config
