// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

// dynalab: preprocess, train, analyze, compare and inspect from one binary.
//
// Exit status: 0 on success, 1 on invalid input (flags, keys, values), 2 when
// the work itself fails.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dynalab/analysis/runner.hpp"
#include "dynalab/config/experiment.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/core/tensor.hpp"
#include "dynalab/data/dataset.hpp"
#include "dynalab/store/checkpoint.hpp"
#include "dynalab/store/container.hpp"
#include "dynalab/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace dynalab;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailed = 2;

struct Globals {
  bool quiet = false;
  bool verbose = false;
};

void note(const Globals& g, const std::string& line) {
  if (g.verbose) std::cerr << line << "\n";
}

// Unknown flags are collected rather than rejected by CLI11 so the message can
// carry a nearest-match suggestion.
void reject_extras(const CLI::App& app) {
  const auto extras = app.remaining();
  if (extras.empty()) return;
  std::vector<std::string> names;
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
  }
  std::string flag = extras.front();
  const auto eq = flag.find('=');
  if (eq != std::string::npos) flag.resize(eq);
  std::string msg = app.get_name() + ": unrecognized argument '" + extras.front() + "'";
  const std::string guess = config::nearest(flag, names);
  if (!guess.empty()) msg += "; did you mean '" + guess + "'?";
  throw ValidationError(msg);
}

// ---- preprocess -------------------------------------------------------------

struct PreprocessArgs {
  data::PreprocessOptions options;
};

int run_preprocess(const PreprocessArgs& a, const Globals& g) {
  if (a.options.seq_len == 0) throw ValidationError("--seq-len must be positive");
  if (a.options.n_shards == 0) throw ValidationError("--shards must be positive");
  const data::DatasetManifest m = data::preprocess(a.options);
  if (!g.quiet) {
    std::printf("dataset=%s tokenizer=%s seq_len=%zu shards=%zu sequences=%zu tokens=%zu dropped=%zu\n",
                a.options.out.string().c_str(), m.tokenizer_id.c_str(), m.seq_len, m.shards.size(),
                m.total_sequences, m.total_tokens, m.dropped_tokens);
  }
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

config::ExperimentConfig build_experiment(const TrainArgs& a) {
  config::ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg = config::load_toml(a.config_path);
  for (const auto& o : a.overrides) config::apply_override(cfg, o);
  cfg.validate();
  if (cfg.data.dataset_path.empty()) {
    throw ValidationError("data.dataset_path is required; set it in the config or with --set data.dataset_path=<dir>");
  }
  return cfg;
}

int run_train(const TrainArgs& a, const Globals& g) {
  const config::ExperimentConfig cfg = build_experiment(a);
  const fs::path runs_dir = config::resolve_runs_dir(cfg);
  note(g, "run=" + cfg.checkpointing.run_name + " runs_dir=" + runs_dir.string() + " config_digest=" + cfg.digest());
  const data::Dataset dataset = data::load_dataset(cfg.data.dataset_path);
  store::CheckpointStore store(runs_dir);
  train::LogSink sink;
  if (!g.quiet) {
    sink = [](const std::string& line) {
      std::cout << line << "\n";
      std::cout.flush();
    };
  }
  const train::TrainResult r = train::train(cfg, dataset, store, sink);
  if (!g.quiet) {
    std::printf("finished run=%s final_step=%lld checkpoints=%zu resumed_from=%lld\n",
                cfg.checkpointing.run_name.c_str(), static_cast<long long>(r.final_step),
                r.checkpoints_written.size(), static_cast<long long>(r.resumed_from));
  }
  return kOk;
}

// ---- analyze / compare ------------------------------------------------------

struct AnalyzeArgs {
  std::string config_path;
  std::string output;
  std::string runs_dir;
};

analysis::AnalysisConfig load_analysis(const AnalyzeArgs& a) {
  analysis::AnalysisConfig cfg = analysis::load_analysis_config(a.config_path);
  if (!a.output.empty()) cfg.output = a.output;
  if (!a.runs_dir.empty()) cfg.runs_dir = a.runs_dir;
  if (cfg.output.empty()) throw ValidationError("analysis output path is required (config key 'output' or --output)");
  return cfg;
}

void report(const analysis::MetricSeries& series, const std::string& output, const Globals& g) {
  analysis::write_series(series, output);
  if (!g.quiet) {
    std::printf("wrote %s rows=%zu errors=%zu\n", output.c_str(), series.rows.size(), series.error_count());
  }
}

int run_analyze(const AnalyzeArgs& a, const Globals& g) {
  const analysis::AnalysisConfig cfg = load_analysis(a);
  const store::CheckpointStore store(analysis::resolve_analysis_runs_dir(cfg));
  note(g, "runs_dir=" + store.root().string());
  report(analysis::run_analysis(cfg, store), cfg.output, g);
  return kOk;
}

struct CompareArgs {
  AnalyzeArgs analyze;
  std::string run_a;
  std::string run_b;
};

int run_compare(const CompareArgs& a, const Globals& g) {
  const analysis::AnalysisConfig cfg = load_analysis(a.analyze);
  const store::CheckpointStore store(analysis::resolve_analysis_runs_dir(cfg));
  note(g, "runs_dir=" + store.root().string());
  report(analysis::compare_runs(a.run_a, a.run_b, cfg, store), cfg.output, g);
  return kOk;
}

// ---- inspect ----------------------------------------------------------------

struct InspectArgs {
  std::string path;
  bool no_verify = false;
  bool tensors = true;
};

bool is_step_dir(const fs::path& p) { return fs::is_regular_file(p / "manifest.json"); }

// A bare "<run>/step_<k>" or "<run>" is looked up under DYNALAB_RUNS_DIR when
// it does not exist relative to the working directory.
fs::path locate(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  const fs::path under = config::resolve_runs_dir(config::ExperimentConfig{}) / arg;
  if (fs::exists(under)) return under;
  throw NotFoundError("no such checkpoint or run directory: '" + arg + "'");
}

void print_step(const fs::path& dir, const InspectArgs& a) {
  const store::CheckpointManifest m = store::read_manifest_at(dir, !a.no_verify);
  std::printf("checkpoint %s\n", dir.string().c_str());
  std::printf("  run            %s\n", m.run_id.c_str());
  std::printf("  step           %lld\n", static_cast<long long>(m.step));
  std::printf("  format_version %u\n", m.format_version);
  std::printf("  config_digest  %s\n", m.config_digest.c_str());
  std::printf("  created_unix   %lld\n", static_cast<long long>(m.created_unix));
  std::printf("  dynamics       %s\n", m.has_learning_dynamics ? "yes" : "no");
  if (!m.eval_batch_id.empty()) std::printf("  eval_batch_id  %s\n", m.eval_batch_id.c_str());
  std::string captures;
  for (const auto& c : m.capture_list) captures += (captures.empty() ? "" : ", ") + c;
  std::printf("  capture_list   %s\n", captures.empty() ? "-" : captures.c_str());
  std::printf("  verified       %s\n", a.no_verify ? "manifest only" : "all files");
  std::printf("  files (%zu)\n", m.files.size());
  for (const auto& f : m.files) {
    std::printf("    %-44s %10llu  %s\n", f.path.c_str(), static_cast<unsigned long long>(f.bytes), f.sha256.c_str());
    const bool container = f.path.size() > 8 && f.path.compare(f.path.size() - 8, 8, ".tensors") == 0;
    if (!a.tensors || !container) continue;
    const auto bytes = store::read_file_bytes(dir / f.path);
    for (const auto& e : store::inspect_container(bytes)) {
      std::printf("      %-42s %-4s %s\n", e.name.c_str(), std::string(dtype_name(e.dtype)).c_str(),
                  shape_string(e.shape).c_str());
    }
  }
}

int run_inspect(const InspectArgs& a, const Globals&) {
  const fs::path p = locate(a.path);
  if (is_step_dir(p)) {
    print_step(p, a);
    return kOk;
  }
  if (!fs::is_directory(p)) throw ValidationError("'" + p.string() + "' is neither a checkpoint nor a run directory");
  const store::CheckpointStore store(p.parent_path());
  const std::string run = p.filename().string();
  const auto steps = store.list_steps(run);
  if (steps.empty()) throw NotFoundError("run directory '" + p.string() + "' holds no checkpoints");
  std::printf("run %s: %zu checkpoint(s)\n", run.c_str(), steps.size());
  for (const auto s : steps) print_step(store.step_dir(run, s), a);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynalab: train small decoders and analyze their learning dynamics"};
  app.require_subcommand(1, 1);
  Globals g;

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Tokenize a corpus into shuffled fixed-length shards");
  pre_cmd->add_option("--input", pre.options.input, "Corpus file, directory, or pre-tokenized .tensors")->required();
  pre_cmd->add_option("--out", pre.options.out, "Output dataset directory")->required();
  pre_cmd->add_option("--seq-len", pre.options.seq_len, "Tokens per training sequence")->capture_default_str();
  pre_cmd->add_option("--shards", pre.options.n_shards, "Number of shards")->capture_default_str();
  pre_cmd->add_option("--seed", pre.options.seed, "Shuffle seed")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train (or resume) a run and write checkpoints");
  train_cmd->add_option("--config", tr.config_path, "Experiment TOML file")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", tr.overrides, "Override one key, e.g. training.max_steps=200 (repeatable)")
      ->allow_extra_args(false);

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Compute metric series over a run's checkpoints");
  analyze_cmd->add_option("--config", an.config_path, "Analysis TOML file")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--output", an.output, "CSV path; overrides the config's output");
  analyze_cmd->add_option("--runs-dir", an.runs_dir, "Runs root; overrides the config and DYNALAB_RUNS_DIR");

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Compute the same series on two runs plus their difference");
  compare_cmd->add_option("--run-a", cmp.run_a, "First run id")->required();
  compare_cmd->add_option("--run-b", cmp.run_b, "Second run id")->required();
  compare_cmd->add_option("--config", cmp.analyze.config_path, "Analysis TOML file")
      ->required()
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--output", cmp.analyze.output, "CSV path; overrides the config's output");
  compare_cmd->add_option("--runs-dir", cmp.analyze.runs_dir, "Runs root; overrides the config and DYNALAB_RUNS_DIR");

  InspectArgs ins;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print a checkpoint's manifest inventory");
  inspect_cmd->add_option("path", ins.path, "Step directory (runs/<run>/step_<k>) or run directory")->required();
  inspect_cmd->add_flag("--no-verify", ins.no_verify, "Check only the manifest digest, not every file");
  inspect_cmd->add_flag("!--no-tensors", ins.tensors, "Omit the per-file tensor listing");

  for (auto* sub : {pre_cmd, train_cmd, analyze_cmd, compare_cmd, inspect_cmd}) {
    sub->add_flag("-q,--quiet", g.quiet, "Suppress progress and log lines on stdout");
    sub->add_flag("-v,--verbose", g.verbose, "Print resolved paths and digests on stderr");
    sub->allow_extras();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    // A misspelled flag usually also leaves a required one unset; name the
    // misspelling first.
    for (const auto* sub : app.get_subcommands()) {
      try {
        reject_extras(*sub);
      } catch (const ValidationError& v) {
        std::cerr << "error: " << v.what() << "\n";
        return kInvalid;
      }
    }
    app.exit(e);
    return kInvalid;
  }

  try {
    if (pre_cmd->parsed()) {
      reject_extras(*pre_cmd);
      return run_preprocess(pre, g);
    }
    if (train_cmd->parsed()) {
      reject_extras(*train_cmd);
      return run_train(tr, g);
    }
    if (analyze_cmd->parsed()) {
      reject_extras(*analyze_cmd);
      return run_analyze(an, g);
    }
    if (compare_cmd->parsed()) {
      reject_extras(*compare_cmd);
      return run_compare(cmp, g);
    }
    reject_extras(*inspect_cmd);
    return run_inspect(ins, g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
}
