// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>

#include "dynalab/core/digest.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/core/rng.hpp"
#include "dynalab/store/container.hpp"

namespace dynalab::train {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kDataStream = 1;

std::string dataset_digest(const data::Dataset& d) {
  std::string all;
  for (const auto& s : d.manifest.shards) all += s.sha256;
  return sha256_hex(all);
}

ScheduleConfig schedule_of(const config::TrainingSection& t) {
  return {t.lr_peak, t.warmup_steps, t.max_steps,
          t.lr_scheduler == "constant_after_warmup" ? Schedule::kConstantAfterWarmup : Schedule::kLinearWithWarmup};
}

AdamWConfig adamw_of(const config::TrainingSection& t) { return {t.beta1, t.beta2, t.adam_eps, t.weight_decay}; }

struct Context {
  const config::ExperimentConfig& cfg;
  const model::ModelConfig& mc;
  store::CheckpointStore& store;
  const data::BatchStream& stream;
  const EvalSet& eval;
  const std::string& dataset_id;
  TrainResult& result;
};

std::vector<TokenBatch> read_micro_batches(const Context& ctx, data::StreamCursor& cursor, std::int64_t step) {
  std::vector<TokenBatch> out;
  for (std::int64_t i = 0; i < ctx.cfg.training.grad_accum_steps; ++i) {
    if (ctx.cfg.data.max_epochs > 0 && cursor.epoch >= static_cast<std::uint64_t>(ctx.cfg.data.max_epochs)) {
      throw TrainingError("data exhausted at step " + std::to_string(step) + " after " +
                          std::to_string(ctx.cfg.data.max_epochs) + " epoch(s)");
    }
    out.push_back(ctx.stream.next(cursor));
  }
  return out;
}

void write_checkpoint(const Context& ctx, std::int64_t step, const model::Parameters& params,
                      const OptimizerState& opt, const data::StreamCursor& cursor, std::uint64_t tokens,
                      const AccumulatedGradient* acc, const TokenBatch* train_batch, bool final) {
  const auto& cl = ctx.cfg.checkpointing.capture_list;
  store::CheckpointPayload p;
  p.run_id = ctx.cfg.checkpointing.run_name;
  p.step = step;
  p.model = params.to_tensors(ctx.mc);
  p.optimizer = opt.to_tensors(ctx.mc);
  if (acc != nullptr) {
    store::LearningDynamicsBundle b;
    b.train_activations = acc->first_trace.activations;
    b.train_gradients = acc->first_gradients.captured;
    b.train_batch = *train_batch;
    b.eval_batch_id = ctx.eval.id;
    if (ctx.cfg.checkpointing.capture_eval) {
      const auto trace = model::forward(ctx.eval.capture_batch, params, ctx.mc, cl);
      b.eval_activations = trace.activations;
      b.eval_gradients = model::backward(trace, params, ctx.mc, cl).captured;
    }
    p.dynamics = std::move(b);
  }
  p.eval = evaluate(params, ctx.mc, ctx.eval.batches, step);
  p.config_digest = ctx.cfg.digest();
  p.capture_list = cl;
  p.config = ctx.cfg.trajectory_json();
  p.resume = {{"step", step},
              {"cursor", data::cursor_to_json(cursor)},
              {"tokens_seen", tokens},
              {"dataset_digest", ctx.dataset_id},
              {"final", final}};
  if (ctx.cfg.checkpointing.reproducible_timestamps) p.created_unix = 0;
  ctx.store.write_checkpoint(p);
  ctx.result.checkpoints_written.push_back(step);
}

}  // namespace

std::string format_step_log(const StepLog& l) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%lld loss=%.6f lr=%.6g tokens=%llu", static_cast<long long>(l.step), l.loss,
                l.lr, static_cast<unsigned long long>(l.tokens));
  return buf;
}

EvalResult evaluate(const model::Parameters& params, const model::ModelConfig& config,
                    std::span<const TokenBatch> batches, std::int64_t step) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    const auto nll = model::negative_log_likelihood(b, params, config);
    total += nll.total;
    tokens += nll.tokens;
  }
  if (tokens == 0) throw DataError("evaluation set is empty");
  return {step, std::exp(total / static_cast<double>(tokens)), tokens};
}

std::vector<data::Shard> training_shards(const data::Dataset& d, const config::ExperimentConfig& c) {
  const auto holdout = static_cast<std::size_t>(c.data.holdout_shards);
  if (holdout >= d.shards.size()) {
    throw ValidationError("data.holdout_shards (" + std::to_string(holdout) + ") leaves no training shard out of " +
                          std::to_string(d.shards.size()));
  }
  return {d.shards.begin(), d.shards.end() - static_cast<std::ptrdiff_t>(holdout)};
}

EvalSet build_eval_set(const data::Dataset& d, const config::ExperimentConfig& c) {
  const auto holdout = static_cast<std::size_t>(c.data.holdout_shards);
  if (holdout >= d.shards.size()) training_shards(d, c);  // throws the descriptive error
  const std::size_t first = holdout == 0 ? 0 : d.shards.size() - holdout;
  const auto bs = static_cast<std::size_t>(c.evaluation.eval_batch_size);
  const auto max_rows = c.evaluation.max_eval_batches == 0
                            ? std::numeric_limits<std::size_t>::max()
                            : static_cast<std::size_t>(c.evaluation.max_eval_batches) * bs;
  std::vector<std::uint32_t> ids;
  std::size_t rows = 0;
  const std::size_t cols = d.manifest.seq_len + 1;
  for (std::size_t s = first; s < d.shards.size() && rows < max_rows; ++s) {
    const auto& seqs = d.shards[s].sequences;
    for (std::size_t r = 0; r < seqs.rows && rows < max_rows; ++r, ++rows) {
      ids.insert(ids.end(), seqs.row(r).begin(), seqs.row(r).end());
    }
  }
  if (rows == 0) throw DataError("evaluation set is empty");
  EvalSet e;
  for (std::size_t r = 0; r < rows; r += bs) {
    const std::size_t n = std::min(bs, rows - r);
    e.batches.emplace_back(n, cols, std::vector<std::uint32_t>(ids.begin() + r * cols, ids.begin() + (r + n) * cols));
  }
  e.capture_batch = e.batches.front();
  e.id = sha256_hex(store::encode_container({{"tokens", e.capture_batch.to_tensor()}}));
  return e;
}

AccumulatedGradient accumulate_gradients(std::span<const TokenBatch> micro, const model::Parameters& params,
                                         const model::ModelConfig& config,
                                         const std::vector<std::string>& capture_list) {
  if (micro.empty()) throw ValidationError("no micro-batches");
  AccumulatedGradient out;
  out.grads = model::Parameters::zeros_like(params);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < micro.size(); ++i) {
    auto trace = model::forward(micro[i], params, config, i == 0 ? capture_list : std::vector<std::string>{});
    auto g = model::backward(trace, params, config, i == 0 ? capture_list : std::vector<std::string>{});
    loss_sum += trace.loss;
    for (const auto& [name, m] : g.params) add_inplace(out.grads.at(name), m);
    if (i == 0) {
      out.first_trace = std::move(trace);
      out.first_gradients = std::move(g);
    }
  }
  const double inv = 1.0 / static_cast<double>(micro.size());
  if (micro.size() > 1) {
    for (auto& [name, m] : out.grads) {
      for (double& x : m.values()) x *= inv;
    }
  }
  out.loss = loss_sum * inv;
  return out;
}

model::Parameters load_parameters(const store::CheckpointStore& store, const std::string& run, std::int64_t step) {
  const auto manifest = store.read_manifest(run, step);
  const auto cfg = config::ExperimentConfig::from_json(manifest.config);
  return model::Parameters::from_tensors(store.read_tensors(run, step, "model.tensors"), cfg.model);
}

TrainResult train(const config::ExperimentConfig& cfg, const data::Dataset& dataset, store::CheckpointStore& store,
                  const LogSink& sink) {
  cfg.validate();
  const auto& mc = cfg.model;
  if (dataset.manifest.seq_len != mc.seq_len) {
    throw ValidationError("dataset seq_len " + std::to_string(dataset.manifest.seq_len) + " differs from model.seq_len " +
                          std::to_string(mc.seq_len));
  }
  if (dataset.manifest.max_token_id >= mc.vocab_size) {
    throw ValidationError("dataset holds token id " + std::to_string(dataset.manifest.max_token_id) +
                          " but model.vocab_size is " + std::to_string(mc.vocab_size));
  }
  const auto& run = cfg.checkpointing.run_name;
  const auto micro = static_cast<std::size_t>(cfg.micro_batch_size());
  const data::BatchStream stream(training_shards(dataset, cfg), micro, Rng::derive(cfg.training.seed, kDataStream));
  const EvalSet eval = build_eval_set(dataset, cfg);
  const std::string dataset_id = dataset_digest(dataset);

  TrainResult result;
  const Context ctx{cfg, mc, store, stream, eval, dataset_id, result};
  model::Parameters params = model::Parameters::initialize(mc, Rng::derive(cfg.training.seed, kInitStream),
                                                           cfg.training.init_std);
  OptimizerState opt = OptimizerState::zeros_like(params);
  std::int64_t step = 0;
  std::uint64_t tokens = 0;
  data::StreamCursor cursor = stream.start();

  if (const auto latest = store.latest_step(run)) {
    if (!cfg.checkpointing.auto_resume) {
      throw ValidationError("run '" + run + "' already has checkpoints and checkpointing.auto_resume is false");
    }
    const auto c = store.read_checkpoint(run, *latest);
    if (c.manifest.config_digest != cfg.digest()) {
      throw ValidationError("run '" + run + "' was written with a different configuration (digest " +
                            c.manifest.config_digest + ")");
    }
    try {
      if (c.manifest.resume.at("dataset_digest").get<std::string>() != dataset_id) {
        throw ValidationError("run '" + run + "' was trained on a different dataset");
      }
      step = c.manifest.resume.at("step").get<std::int64_t>();
      tokens = c.manifest.resume.at("tokens_seen").get<std::uint64_t>();
      cursor = data::cursor_from_json(c.manifest.resume.at("cursor"));
    } catch (const json::exception& e) {
      throw IntegrityError(std::string("checkpoint resume state is malformed: ") + e.what());
    }
    stream.validate(cursor);
    params = model::Parameters::from_tensors(c.model, mc);
    opt = OptimizerState::from_tensors(c.optimizer, mc);
    result.resumed_from = step;
  }

  const std::int64_t stop = cfg.training.stop_at_step > 0 ? cfg.training.stop_at_step : cfg.training.max_steps;
  const auto& cl = cfg.checkpointing.capture_list;
  for (; step < stop; ++step) {
    const data::StreamCursor before = cursor;
    const auto batches = read_micro_batches(ctx, cursor, step);
    AccumulatedGradient acc = accumulate_gradients(batches, params, mc, cl);
    if (step % cfg.checkpointing.checkpoint_every == 0 && !store.has_step(run, step)) {
      write_checkpoint(ctx, step, params, opt, before, tokens, &acc, &batches.front(), false);
    }
    if (cfg.training.grad_clip > 0.0) clip_global_norm(acc.grads, cfg.training.grad_clip);
    const double lr = lr_at(step, schedule_of(cfg.training));
    adamw_step(params, acc.grads, opt, lr, adamw_of(cfg.training));
    tokens += static_cast<std::uint64_t>(batches.size() * micro * mc.seq_len);
    result.log.push_back({step, acc.loss, lr, tokens});
    if (sink && step % cfg.monitoring.log_every == 0) sink(format_step_log(result.log.back()));
    if (sink && (step + 1) % cfg.evaluation.eval_every == 0) {
      const auto e = evaluate(params, mc, eval.batches, step + 1);
      char buf[128];
      std::snprintf(buf, sizeof buf, "eval step=%lld perplexity=%.6f tokens=%llu", static_cast<long long>(e.step),
                    e.perplexity, static_cast<unsigned long long>(e.token_count));
      sink(buf);
    }
  }

  if (step < cfg.training.max_steps && !store.has_step(run, step)) {
    // Stopped early: record the state so a later invocation resumes exactly here.
    data::StreamCursor peek = cursor;
    const auto batches = read_micro_batches(ctx, peek, step);
    const AccumulatedGradient acc = accumulate_gradients(std::span(batches).first(1), params, mc, cl);
    write_checkpoint(ctx, step, params, opt, cursor, tokens, &acc, &batches.front(), false);
  } else if (step == cfg.training.max_steps && cfg.checkpointing.save_final && !store.has_step(run, step)) {
    write_checkpoint(ctx, step, params, opt, cursor, tokens, nullptr, nullptr, true);
  }
  result.params = std::move(params);
  result.optimizer = std::move(opt);
  result.final_step = step;
  return result;
}

}  // namespace dynalab::train
