// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynalab/config/experiment.hpp"
#include "dynalab/core/tokens.hpp"
#include "dynalab/data/dataset.hpp"
#include "dynalab/data/stream.hpp"
#include "dynalab/model/decoder.hpp"
#include "dynalab/store/checkpoint.hpp"
#include "dynalab/train/optimizer.hpp"

namespace dynalab::train {

using LogSink = std::function<void(const std::string& line)>;

struct StepLog {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::uint64_t tokens = 0;  // cumulative after this step
};

/// `step=<k> loss=<f> lr=<f> tokens=<n>`
std::string format_step_log(const StepLog& log);

/// Perplexity = exp(total NLL / total tokens) over every batch. Throws DataError
/// on an empty set. Parameters are only read.
EvalResult evaluate(const model::Parameters& params, const model::ModelConfig& config,
                    std::span<const TokenBatch> batches, std::int64_t step = 0);

struct EvalSet {
  std::vector<TokenBatch> batches;
  TokenBatch capture_batch;  // the fixed batch for learning-dynamics capture
  std::string id;            // SHA-256 of capture_batch
};

/// Uses the last `data.holdout_shards` shards, or every shard when that is 0.
EvalSet build_eval_set(const data::Dataset& dataset, const config::ExperimentConfig& config);
std::vector<data::Shard> training_shards(const data::Dataset& dataset, const config::ExperimentConfig& config);

struct AccumulatedGradient {
  double loss = 0.0;  // mean of micro-batch losses
  model::Parameters grads;
  model::ForwardTrace first_trace;    // micro-batch 0, with captures
  model::Gradients first_gradients;   // unscaled micro-batch 0 gradients
};

/// Mean of per-micro-batch gradients, summed in order and scaled once.
AccumulatedGradient accumulate_gradients(std::span<const TokenBatch> micro_batches, const model::Parameters& params,
                                         const model::ModelConfig& config,
                                         const std::vector<std::string>& capture_list);

struct TrainResult {
  model::Parameters params;
  OptimizerState optimizer;
  std::int64_t final_step = 0;  // optimizer updates applied
  std::int64_t resumed_from = -1;
  std::vector<StepLog> log;
  std::vector<std::int64_t> checkpoints_written;
};

/// Runs (or resumes) the run named by checkpointing.run_name. The checkpoint
/// for step k holds the parameters before update k and the dynamics of the
/// first micro-batch of step k.
TrainResult train(const config::ExperimentConfig& config, const data::Dataset& dataset,
                  store::CheckpointStore& store, const LogSink& sink = {});

/// Reads parameters stored in a checkpoint's model.tensors.
model::Parameters load_parameters(const store::CheckpointStore& store, const std::string& run, std::int64_t step);

}  // namespace dynalab::train
