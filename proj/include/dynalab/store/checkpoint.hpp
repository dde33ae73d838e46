// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynalab/core/tensor.hpp"
#include "dynalab/core/tokens.hpp"

namespace dynalab {

struct EvalResult {
  std::int64_t step = 0;
  double perplexity = 0.0;
  std::uint64_t token_count = 0;

  bool operator==(const EvalResult&) const = default;
};

}  // namespace dynalab

namespace dynalab::store {

inline constexpr std::uint32_t kManifestVersion = 1;

struct LearningDynamicsBundle {
  TensorMap train_activations;
  TensorMap train_gradients;
  TensorMap eval_activations;
  TensorMap eval_gradients;
  TokenBatch train_batch;
  std::string eval_batch_id;
};

struct FileRecord {
  std::string path;  // relative to the step directory
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct CheckpointManifest {
  std::uint32_t format_version = kManifestVersion;
  std::string run_id;
  std::int64_t step = 0;
  std::string config_digest;
  std::vector<std::string> capture_list;
  std::int64_t created_unix = 0;
  std::vector<FileRecord> files;
  bool has_learning_dynamics = false;
  std::string eval_batch_id;
  nlohmann::json config;  // the full run configuration
  nlohmann::json resume;  // opaque trainer state

  const FileRecord* find_file(std::string_view path) const;
};

nlohmann::json manifest_to_json(const CheckpointManifest& m);
CheckpointManifest manifest_from_json(const nlohmann::json& j);

struct CheckpointPayload {
  std::string run_id;
  std::int64_t step = 0;
  TensorMap model;
  TensorMap optimizer;
  std::optional<LearningDynamicsBundle> dynamics;
  std::optional<EvalResult> eval;
  std::string config_digest;
  std::vector<std::string> capture_list;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json resume = nlohmann::json::object();
  /// Unset means wall-clock time.
  std::optional<std::int64_t> created_unix;
};

struct Checkpoint {
  CheckpointManifest manifest;
  TensorMap model;
  TensorMap optimizer;
  std::optional<LearningDynamicsBundle> dynamics;
  std::optional<EvalResult> eval;
};

/// Called with a stage label after each file lands in the temporary directory
/// and just before the final rename ("rename"). Throwing aborts the write.
using FaultHook = std::function<void(const std::string& stage)>;

/// Layout: <root>/<run>/step_<step>/{model,optimizer}.tensors,
/// learning_dynamics/*.tensors, eval_results.json, manifest.json.
/// Checkpoints are immutable once the temporary directory is renamed.
class CheckpointStore {
 public:
  explicit CheckpointStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path run_dir(const std::string& run) const;
  std::filesystem::path step_dir(const std::string& run, std::int64_t step) const;

  CheckpointManifest write_checkpoint(const CheckpointPayload& payload);

  /// Loads and verifies every file against the manifest.
  Checkpoint read_checkpoint(const std::string& run, std::int64_t step) const;

  /// Verifies the manifest's own digest; `verify_files` also hashes every file.
  CheckpointManifest read_manifest(const std::string& run, std::int64_t step,
                                   bool verify_files = false) const;

  /// Reads one container file after checking its digest against the manifest.
  TensorMap read_tensors(const std::string& run, std::int64_t step, const std::string& file) const;

  std::vector<std::int64_t> list_steps(const std::string& run) const;
  std::vector<std::string> list_runs() const;
  std::optional<std::int64_t> latest_step(const std::string& run) const;
  bool has_step(const std::string& run, std::int64_t step) const;

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

 private:
  std::filesystem::path root_;
  FaultHook fault_hook_;
};

/// Reads a manifest from a step directory path directly (used by `inspect`).
CheckpointManifest read_manifest_at(const std::filesystem::path& step_dir, bool verify_files);

void validate_run_id(const std::string& run);

}  // namespace dynalab::store
