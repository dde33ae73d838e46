// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dynalab/analysis/runner.hpp"
#include "dynalab/config/experiment.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/core/rng.hpp"
#include "dynalab/data/dataset.hpp"
#include "dynalab/metrics/metrics.hpp"
#include "dynalab/model/decoder.hpp"
#include "dynalab/store/container.hpp"
#include "dynalab/train/trainer.hpp"
#include "oracle/finite_difference.hpp"
#include "oracle/metric_oracles.hpp"
#include "oracle/reference_decoder.hpp"
#include "oracle/store_fixtures.hpp"
#include "oracle/test_util.hpp"
#include "oracle/train_fixtures.hpp"

namespace fs = std::filesystem;
using namespace dynalab;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kInitLossRelTol = 0.05;
constexpr double kGoldenTol = 1e-12;
constexpr double kPwccaSelfTol = 1e-8;
constexpr double kCkaHsicTol = 1e-10;
constexpr double kNuclearSvdTol = 1e-10;
constexpr double kGqaMhaTol = 1e-12;
constexpr double kAccumTol = 1e-10;
constexpr int kFlipsPerFile = 16;
constexpr int kKillTrials = 100;
constexpr double kE2eBudgetSeconds = 600.0;
constexpr std::size_t kE2eCorpusBytes = 1000000;
constexpr double kOverfitLoss = 0.1;
constexpr std::int64_t kOverfitSteps = 2000;
constexpr double kOverfitPerplexity = 1.2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = model::ModelConfig::tiny();
  const auto p = testing::lively_parameters(c, 11);
  const auto report = testing::finite_difference_check(testing::random_tokens(2, c.seq_len + 1, c.vocab_size, 12), p, c);
  const double elapsed = seconds_since(t0);
  const bool all = report.checked == p.scalar_count();
  return {all && report.max_relative_error < kGradRelTol && elapsed < kGradBudgetSeconds,
          "max relative error " + fmt("%.3g", report.max_relative_error) + " (" + report.worst_parameter + ") over " +
              std::to_string(report.checked) + "/" + std::to_string(p.scalar_count()) + " scalars, " +
              fmt("%.1f", elapsed) + " s"};
}

// 2 -------------------------------------------------------------------------

Outcome initialization_loss() {
  std::string detail;
  bool pass = true;
  for (std::size_t vocab : {32u, 320u}) {
    auto c = model::ModelConfig::tiny();
    c.vocab_size = vocab;
    const auto p = model::Parameters::initialize(c, 21, config::TrainingSection{}.init_std);
    const double loss = model::forward(testing::random_tokens(16, c.seq_len + 1, vocab, 22), p, c).loss;
    const double target = std::log(static_cast<double>(vocab));
    const double rel = std::abs(loss - target) / target;
    pass = pass && rel < kInitLossRelTol;
    detail += (detail.empty() ? "" : "; ") + std::string("V=") + std::to_string(vocab) + " loss " +
              fmt("%.5f", loss) + " vs ln V " + fmt("%.5f", target) + " (" + fmt("%.2e", rel) + ")";
  }
  return {pass, detail};
}

// 3 -------------------------------------------------------------------------

Outcome metric_golden_suite() {
  struct Case {
    std::string name;
    double got;
    double expected;
    double tol;
  };
  const Matrix x = testing::random_matrix(12, 5, 31);
  const Matrix u = testing::random_matrix(9, 1, 32), v = testing::random_matrix(1, 6, 33);
  const Matrix rank1 = testing::naive_matmul(u, v);  // r = min(9, 6) = 6
  const std::vector<Case> cases = {
      {"gini(uniform)", metrics::gini(std::vector<double>(8, 1.0)).value, 0.0, 0.0},
      {"gini(one-hot, N=4)", metrics::gini(std::vector<double>{0, 0, 1, 0}).value, 0.75, 0.0},
      {"hoyer(uniform)", metrics::hoyer(std::vector<double>(8, 1.0)).value, 0.0, 0.0},
      {"hoyer(one-hot)", metrics::hoyer(std::vector<double>{0, 0, 1, 0}).value, 1.0, 0.0},
      {"per(I_6)", metrics::per(Matrix::identity(6)).value, 1.0, kGoldenTol},
      {"per(rank-1, r=6)", metrics::per(rank1).value, 1.0 / 6.0, kGoldenTol},
      {"kappa(diag(3,1))", metrics::condition_number(Matrix::from_rows({{3, 0}, {0, 1}})).value, 3.0, kGoldenTol},
      {"cka(X,X)", metrics::cka_linear(x, x).value, 1.0, kGoldenTol},
      {"pwcca(X,X)", metrics::pwcca(x, x).value, 1.0, kPwccaSelfTol},
      {"nuclear(I_7)", metrics::norms(Matrix::identity(7)).nuclear, 7.0, kGoldenTol},
  };
  std::string failures;
  std::string worst;
  double worst_err = -1.0;
  for (const auto& k : cases) {
    const double err = std::abs(k.got - k.expected);
    if (err > k.tol) failures += " " + k.name + "=" + fmt("%.17g", k.got);
    if (err > worst_err) {
      worst_err = err;
      worst = k.name;
    }
  }
  return {failures.empty(), std::to_string(cases.size()) + " values, largest deviation " + fmt("%.3g", worst_err) +
                                " at " + worst + (failures.empty() ? "" : "; outside tolerance:" + failures)};
}

// 4 -------------------------------------------------------------------------

Outcome oracle_equivalences() {
  // Linear CKA against the centered-Gram HSIC formulation.
  double cka = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix a = testing::random_matrix(30, 6, 40 + s);
    const Matrix b = testing::random_matrix(30, 4, 50 + s);
    cka = std::max(cka, std::abs(metrics::cka_linear(a, b).value - testing::hsic_linear_cka(a, b)));
  }
  // Nuclear norm against singular values from the Gram eigenproblem.
  double nuclear = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix a = testing::random_matrix(7 + s, 5, 60 + s);
    double sum = 0.0;
    for (double sv : testing::gram_singular_values(a)) sum += sv;
    nuclear = std::max(nuclear, std::abs(metrics::norms(a).nuclear - sum));
  }
  // Grouped-query attention with n_kv = n_heads against the plain multi-head oracle.
  auto c = model::ModelConfig::tiny();
  c.n_kv_heads = c.n_heads;
  const auto p = testing::lively_parameters(c, 70);
  const TokenBatch tokens = testing::random_tokens(3, c.seq_len + 1, c.vocab_size, 71);
  const auto trace = model::forward(tokens, p, c);
  const auto ref = testing::reference_forward(tokens, p, c);
  double gqa = std::abs(trace.loss - ref.loss);
  for (std::size_t b = 0; b < tokens.rows; ++b)
    for (std::size_t s = 0; s < c.seq_len; ++s)
      for (std::size_t j = 0; j < c.vocab_size; ++j)
        gqa = std::max(gqa, std::abs(trace.logits(b * c.seq_len + s, j) - ref.logits[b][s][j]));
  // Accumulated micro-batch gradient against one concatenated batch.
  const auto ct = model::ModelConfig::tiny();
  const auto pt = testing::lively_parameters(ct, 80);
  std::vector<TokenBatch> micro;
  TokenBatch all(0, ct.seq_len + 1, {});
  for (std::uint64_t k = 0; k < 4; ++k) {
    micro.push_back(testing::random_tokens(2, ct.seq_len + 1, ct.vocab_size, 81 + k));
    all.ids.insert(all.ids.end(), micro.back().ids.begin(), micro.back().ids.end());
    all.rows += 2;
  }
  const auto acc = train::accumulate_gradients(micro, pt, ct, {});
  const auto full = model::backward(model::forward(all, pt, ct), pt, ct);
  double accum = 0.0;
  for (const auto& [name, g] : full.params) accum = std::max(accum, testing::max_abs(g, acc.grads.at(name)));

  const bool pass = cka < kCkaHsicTol && nuclear < kNuclearSvdTol && gqa < kGqaMhaTol && accum < kAccumTol;
  return {pass, "cka/hsic " + fmt("%.2e", cka) + ", nuclear/svd " + fmt("%.2e", nuclear) + ", gqa/mha " +
                    fmt("%.2e", gqa) + ", accumulation " + fmt("%.2e", accum)};
}

// 5 -------------------------------------------------------------------------

std::vector<std::pair<std::string, std::vector<std::byte>>> tree_bytes(const fs::path& root) {
  std::vector<std::pair<std::string, std::vector<std::byte>>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), store::read_file_bytes(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism_and_resume() {
  const fs::path root = testing::scratch_dir("accept_resume");
  const auto dataset = testing::text_dataset(20000, 8, 4, 5);
  auto cfg_a = testing::tiny_experiment("toy", (root / "a").string());
  cfg_a.checkpointing.save_final = true;
  store::CheckpointStore store_a(root / "a");
  const auto straight = train::train(cfg_a, dataset, store_a);

  auto cfg_b = cfg_a;
  cfg_b.checkpointing.runs_dir = (root / "b").string();
  store::CheckpointStore store_b(root / "b");
  cfg_b.training.stop_at_step = 50;
  const auto first = train::train(cfg_b, dataset, store_b);
  cfg_b.training.stop_at_step = 0;
  const auto resumed = train::train(cfg_b, dataset, store_b);

  const auto& mc = cfg_a.model;
  const bool params_equal =
      testing::maps_bitwise_equal(straight.params.to_tensors(mc), resumed.params.to_tensors(mc));
  const auto files_a = tree_bytes(root / "a");
  const auto files_b = tree_bytes(root / "b");
  const bool bytes_equal = files_a == files_b;
  fs::remove_all(root);
  const bool pass = params_equal && bytes_equal && straight.final_step == 100 && first.final_step == 50 &&
                    resumed.resumed_from == 50 && resumed.final_step == 100;
  return {pass, std::string("final parameters ") + (params_equal ? "bitwise equal" : "DIFFER") + ", " +
                    std::to_string(files_a.size()) + " checkpoint files " +
                    (bytes_equal ? "byte-identical" : "DIFFER") + ", resumed from step " +
                    std::to_string(resumed.resumed_from)};
}

// 6 -------------------------------------------------------------------------

Outcome checkpoint_integrity() {
  const fs::path root = testing::scratch_dir("accept_integrity");
  store::CheckpointStore s(root);
  const auto payload = testing::sample_payload("r1", 0, 1);
  const auto manifest = s.write_checkpoint(payload);
  const auto back = s.read_checkpoint("r1", 0);
  const bool round_trip = testing::maps_bitwise_equal(back.model, payload.model) &&
                          testing::maps_bitwise_equal(back.optimizer, payload.optimizer) &&
                          testing::maps_bitwise_equal(back.dynamics->train_activations,
                                                      payload.dynamics->train_activations) &&
                          testing::maps_bitwise_equal(back.dynamics->train_gradients,
                                                      payload.dynamics->train_gradients) &&
                          back.dynamics->train_batch.ids == payload.dynamics->train_batch.ids &&
                          back.eval == payload.eval;

  std::vector<std::string> files;
  for (const auto& f : manifest.files) files.push_back(f.path);
  files.push_back("manifest.json");
  const fs::path dir = s.step_dir("r1", 0);
  Rng rng(6);
  int flips = 0, detected = 0;
  for (const auto& f : files) {
    const auto original = store::read_file_bytes(dir / f);
    for (int t = 0; t < kFlipsPerFile; ++t) {
      auto b = original;
      b[rng.below(b.size())] ^= std::byte{static_cast<unsigned char>(1 + rng.below(255))};
      store::write_file_bytes(dir / f, b);
      ++flips;
      try {
        s.read_checkpoint("r1", 0);
      } catch (const Error&) {
        ++detected;
      }
    }
    store::write_file_bytes(dir / f, original);
  }

  int consistent = 0, landed = 0;
  for (int t = 0; t < kKillTrials; ++t) {
    const auto p = testing::sample_payload("r1", 1 + t, 100 + t, 64);
    const auto out = testing::kill_during_write(root, p, std::chrono::microseconds(40 * t), {payload});
    consistent += out.consistent;
    landed += out.landed;
  }
  fs::remove_all(root);
  const bool pass = round_trip && detected == flips && consistent == kKillTrials;
  return {pass, std::string("round trip ") + (round_trip ? "bitwise" : "MISMATCH") + ", " + std::to_string(detected) +
                    "/" + std::to_string(flips) + " byte flips detected, " + std::to_string(consistent) + "/" +
                    std::to_string(kKillTrials) + " killed writers left a consistent store (" +
                    std::to_string(landed) + " completed before the kill)"};
}

// 7 -------------------------------------------------------------------------

Outcome chunking_arithmetic() {
  std::vector<std::uint32_t> ids(10000);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i % 50257);
  const auto c = data::chunk(ids, 2048);
  bool order = c.sequences.rows == 4;
  for (std::size_t i = 0; order && i < c.sequences.ids.size(); ++i) order = c.sequences.ids[i] == ids[i];

  Rng rng(7);
  TokenBatch seqs(10000, 9, std::vector<std::uint32_t>(10000 * 9));
  for (auto& id : seqs.ids) id = static_cast<std::uint32_t>(rng.below(320));
  const auto shards = data::shuffle_and_shard(seqs, 10, 8);
  std::multiset<std::vector<std::uint32_t>> before, after;
  for (std::size_t r = 0; r < seqs.rows; ++r) before.insert({seqs.row(r).begin(), seqs.row(r).end()});
  for (const auto& s : shards)
    for (std::size_t r = 0; r < s.sequences.rows; ++r) after.insert({s.sequences.row(r).begin(), s.sequences.row(r).end()});

  const bool pass = c.sequences.rows == 4 && c.dropped_tokens == 1804 && order && before == after;
  return {pass, std::to_string(c.sequences.rows) + " sequences, " + std::to_string(c.dropped_tokens) +
                    " dropped tokens; multiset over " + std::to_string(after.size()) + " sequences in " +
                    std::to_string(shards.size()) + " shards " + (before == after ? "preserved" : "CHANGED")};
}

// 8 -------------------------------------------------------------------------

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = testing::scratch_dir("accept_e2e");
  {
    std::ofstream(root / "corpus.txt", std::ios::binary) << testing::pseudo_text(kE2eCorpusBytes, 9);
  }
  data::PreprocessOptions pre;
  pre.input = root / "corpus.txt";
  pre.out = root / "data";
  pre.seq_len = 8;
  pre.n_shards = 10;
  pre.seed = 9;
  data::preprocess(pre);

  auto cfg = testing::tiny_experiment("e2e", (root / "runs").string());
  cfg.data.dataset_path = pre.out.string();
  cfg.training.max_steps = 500;
  cfg.training.warmup_steps = 50;
  cfg.checkpointing.checkpoint_every = 100;
  store::CheckpointStore store(root / "runs");
  train::train(cfg, data::load_dataset(pre.out), store);

  const std::string toml = "run = \"e2e\"\noutput = \"" + (root / "series.csv").string() +
                           "\"\n"
                           "[[metrics]]\nmetric = \"per\"\ndata = \"gradients\"\n"
                           "components = [\"layers.*.attention.v_proj\", \"layers.*.attention.o_proj\", "
                           "\"layers.*.swiglu.w_2\"]\n"
                           "[[metrics]]\nmetric = \"condition_number\"\ndata = \"weights\"\naggregate = \"mean\"\n"
                           "component = \"layers.*.attention.v_proj\"\n"
                           "[[metrics]]\nmetric = \"condition_number\"\ndata = \"weights\"\naggregate = \"mean\"\n"
                           "component = \"layers.*.swiglu.w_2\"\n";
  auto acfg = analysis::parse_analysis_toml(toml);
  acfg.runs_dir = (root / "runs").string();
  const auto series = analysis::run_analysis(acfg, store);
  analysis::write_series(series, acfg.output);

  std::set<std::int64_t> per_steps, kappa_steps;
  bool per_ok = true, kappa_ok = true;
  for (const auto& r : series.rows) {
    if (r.metric == "per") {
      per_steps.insert(r.step);
      per_ok = per_ok && r.error.empty() && r.value > 0.0 && r.value <= 1.0;
    } else {
      kappa_steps.insert(r.step);
      kappa_ok = kappa_ok && r.error.empty() && r.value >= 1.0;
    }
  }
  std::ifstream csv(acfg.output);
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  const double elapsed = seconds_since(t0);
  fs::remove_all(root);
  const bool pass = per_steps.size() == 5 && kappa_steps.size() == 5 && per_ok && kappa_ok &&
                    lines == series.rows.size() + 1 && elapsed < kE2eBudgetSeconds;
  return {pass, std::to_string(per_steps.size()) + "-step PER series (" + (per_ok ? "all in (0,1]" : "OUT OF RANGE") +
                    "), " + std::to_string(kappa_steps.size()) + "-step condition series (" +
                    (kappa_ok ? "all >= 1" : "BELOW 1") + "), " + std::to_string(series.rows.size()) + " rows, " +
                    fmt("%.1f", elapsed) + " s"};
}

// 9 -------------------------------------------------------------------------

Outcome overfit_sanity() {
  const fs::path root = testing::scratch_dir("accept_overfit");
  // Period-32 pattern over the whole tiny vocabulary, repeated to 1,000 tokens.
  const std::vector<std::size_t> order = data::permutation(32, 90);
  std::vector<std::uint32_t> ids(1000);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(order[i % order.size()]);
  store::write_container(root / "corpus.tensors", {{"tokens", Tensor::u32({ids.size()}, ids)}});

  data::PreprocessOptions pre;
  pre.input = root / "corpus.tensors";
  pre.out = root / "data";
  pre.seq_len = 8;
  pre.n_shards = 1;
  pre.seed = 91;
  data::preprocess(pre);
  const auto dataset = data::load_dataset(pre.out);

  auto cfg = testing::tiny_experiment("overfit", (root / "runs").string());
  cfg.model.vocab_size = 32;
  cfg.data.tokenizer = "pretokenized";
  cfg.data.dataset_path = pre.out.string();
  cfg.data.holdout_shards = 0;  // evaluate on the training sequences
  cfg.data.batch_size = 8;
  cfg.training.max_steps = kOverfitSteps;
  cfg.training.warmup_steps = 100;
  cfg.checkpointing.checkpoint_every = kOverfitSteps;
  store::CheckpointStore store(root / "runs");
  const auto result = train::train(cfg, dataset, store);

  std::int64_t reached = -1;
  for (const auto& l : result.log) {
    if (l.loss < kOverfitLoss) {
      reached = l.step;
      break;
    }
  }
  const double final_loss = result.log.back().loss;
  std::vector<TokenBatch> all = {dataset.shards.at(0).sequences};
  const auto eval = train::evaluate(result.params, cfg.model, all, result.final_step);
  fs::remove_all(root);
  const bool pass = reached >= 0 && reached < kOverfitSteps && eval.perplexity < kOverfitPerplexity;
  return {pass, "loss < 0.1 first at step " + std::to_string(reached) + ", final loss " + fmt("%.4f", final_loss) +
                    ", perplexity on the training sequences " + fmt("%.4f", eval.perplexity) + " over " +
                    std::to_string(eval.token_count) + " tokens"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"initialization loss", initialization_loss},
      {"metric golden suite", metric_golden_suite},
      {"oracle equivalences", oracle_equivalences},
      {"determinism and resume", determinism_and_resume},
      {"checkpoint integrity", checkpoint_integrity},
      {"chunking arithmetic", chunking_arithmetic},
      {"end-to-end workflow", end_to_end},
      {"overfit sanity", overfit_sanity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
