// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dynalab/analysis/runner.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/store/container.hpp"
#include "dynalab/train/trainer.hpp"
#include "oracle/test_util.hpp"
#include "oracle/train_fixtures.hpp"

namespace dynalab::analysis {
namespace {

namespace fs = std::filesystem;

/// Two short toy runs sharing one dataset, trained once for the whole suite.
class AnalysisTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(testing::scratch_dir("analysis"));
    const auto ds = testing::text_dataset(4000, 8, 4, 5);
    store::CheckpointStore store(*root_);
    for (const auto& [run, seed] : {std::pair<std::string, std::uint64_t>{"a", 1}, {"b", 2}}) {
      auto cfg = testing::tiny_experiment(run, root_->string());
      cfg.training.seed = seed;
      cfg.training.max_steps = 40;
      cfg.checkpointing.checkpoint_every = 10;
      cfg.checkpointing.save_final = run == "a";
      train::train(cfg, ds, store);
    }
    auto short_cfg = testing::tiny_experiment("short", root_->string());
    short_cfg.training.max_steps = 40;
    short_cfg.checkpointing.checkpoint_every = 20;
    train::train(short_cfg, ds, store);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }

  AnalysisConfig parse(const std::string& text) const { return parse_analysis_toml(text); }
  store::CheckpointStore store() const { return store::CheckpointStore(*root_); }

  static fs::path* root_;
};

fs::path* AnalysisTest::root_ = nullptr;

TEST_F(AnalysisTest, PerOfGradientsOverEveryCheckpoint) {
  const auto cfg = parse(R"(
run = "b"
[[metrics]]
metric = "per"
data = "gradients"
component = "layers.*.swiglu.w_2"
)");
  const auto s = run_analysis(cfg, store());
  ASSERT_EQ(s.rows.size(), 4u * 2u);  // steps 0..30, two layers
  EXPECT_EQ(s.error_count(), 0u);
  for (const auto& r : s.rows) {
    EXPECT_GT(r.value, 0.0);
    EXPECT_LE(r.value, 1.0);
    EXPECT_EQ(r.metric, "per");
    EXPECT_EQ(r.meta["source"], "train");
  }
  EXPECT_EQ(s.rows[0].step, 0);
  EXPECT_EQ(s.rows[0].component, "layers.0.swiglu.w_2");
  EXPECT_EQ(s.rows[7].step, 30);
}

TEST_F(AnalysisTest, LayerAveragedConditionNumberMatchesPerLayerRows) {
  const auto mean_cfg = parse(R"(
run = "b"
[[metrics]]
metric = "condition_number"
data = "gradients"
components = ["layers.*.attention.v_proj", "layers.*.attention.o_proj"]
aggregate = "mean"
)");
  const auto per_layer_cfg = parse(R"(
run = "b"
[[metrics]]
metric = "condition_number"
data = "gradients"
components = ["layers.*.attention.v_proj", "layers.*.attention.o_proj"]
)");
  const auto mean = run_analysis(mean_cfg, store());
  const auto cells = run_analysis(per_layer_cfg, store());
  ASSERT_EQ(mean.rows.size(), 4u);
  ASSERT_EQ(cells.rows.size(), 16u);
  for (const auto& m : mean.rows) {
    EXPECT_EQ(m.component, "layers.*.attention.v_proj+layers.*.attention.o_proj");
    EXPECT_EQ(m.meta["count"], 4);
    std::vector<double> vals;
    for (const auto& c : cells.rows) {
      if (c.step == m.step) vals.push_back(c.value);
    }
    ASSERT_EQ(vals.size(), 4u);
    // The mean is over the per-component values in resolution order.
    std::vector<double> ordered;
    for (const char* name : {"layers.0.attention.v_proj", "layers.1.attention.v_proj", "layers.0.attention.o_proj",
                             "layers.1.attention.o_proj"}) {
      for (const auto& c : cells.rows) {
        if (c.step == m.step && c.component == name) ordered.push_back(c.value);
      }
    }
    const double expected = (((ordered[0] + ordered[1]) + ordered[2]) + ordered[3]) / 4.0;
    EXPECT_EQ(m.value, expected);
    EXPECT_GE(m.value, 1.0);
  }
}

TEST_F(AnalysisTest, SimilarityReferences) {
  const auto cfg = parse(R"(
run = "a"
[steps]
end = 30
[[metrics]]
metric = "cka_linear"
component = "layers.1.attention.v_proj"
reference = "step:0"
[[metrics]]
metric = "pwcca"
component = "layers.0.attention.o_proj"
[[metrics]]
metric = "cka_rbf"
component = "layers.0.swiglu.w_2"
reference = "run:b"
source = "eval"
)");
  const auto s = run_analysis(cfg, store());
  ASSERT_EQ(s.rows.size(), 12u);
  for (const auto& r : s.rows) {
    if (r.metric == "cka_linear" && r.step == 0) {
      EXPECT_NEAR(r.value, 1.0, 1e-12);
    }
    if (r.metric == "pwcca" && r.step == 0) {
      EXPECT_EQ(r.error, "no_reference");
    } else {
      EXPECT_TRUE(r.error.empty()) << r.metric << " " << r.step << " " << r.meta.dump();
      EXPECT_GE(r.value, 0.0);
      EXPECT_LE(r.value, 1.0 + 1e-12);
    }
    if (r.metric == "pwcca" && r.step == 20) EXPECT_EQ(r.meta["reference_step"], 10);
    if (r.metric == "cka_rbf") {
      EXPECT_EQ(r.meta["reference_run"], "b");
      EXPECT_EQ(r.meta["source"], "eval");
    }
  }
}

TEST_F(AnalysisTest, MissingDataBecomesErrorRow) {
  // Step 40 of run "a" is the final checkpoint, written without dynamics.
  const auto cfg = parse(R"(
run = "a"
[steps]
start = 30
[[metrics]]
metric = "gini"
data = "activations"
component = "layers.0.attention.v_proj"
[[metrics]]
metric = "norm_frobenius"
component = "lm_head"
)");
  const auto s = run_analysis(cfg, store());
  ASSERT_EQ(s.rows.size(), 4u);
  EXPECT_EQ(s.error_count(), 1u);
  for (const auto& r : s.rows) {
    if (r.step == 40 && r.metric == "gini") {
      EXPECT_EQ(r.error, "missing_data");
      EXPECT_EQ(r.component, "layers.0.attention.v_proj");
    } else {
      EXPECT_TRUE(r.error.empty());
    }
  }
  EXPECT_NE(s.to_csv().find("a,40,layers.0.attention.v_proj,gini,,"), std::string::npos);
}

TEST_F(AnalysisTest, ValidationHappensBeforeCompute) {
  EXPECT_THROW(parse("run = \"a\"\n[[metrics]]\nmetric = \"pwcca\"\ndata = \"weights\"\ncomponent = \"lm_head\"\n"),
               ValidationError);
  EXPECT_THROW(parse("run = \"a\"\n[[metrics]]\nmetric = \"per\"\ndata = \"activations\"\n"
                     "component = \"layers.0.swiglu.w_2\"\n"),
               ValidationError);
  EXPECT_THROW(parse("run = \"a\"\n[[metrics]]\nmetric = \"per\"\ncomponent = \"layers.0.swiglu.w_2\"\n"
                     "reference = \"previous\"\n"),
               ValidationError);
  EXPECT_THROW(parse("run = \"a\"\nouptut = \"x.csv\"\n[[metrics]]\nmetric = \"per\"\ncomponent = \"lm_head\"\n"),
               ValidationError);
  const auto empty = parse("run = \"a\"\n[steps]\nstart = 1000\n[[metrics]]\nmetric = \"per\"\ncomponent = \"lm_head\"\n");
  try {
    run_analysis(empty, store());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("empty step range"), std::string::npos);
  }
  const auto bad_layer = parse("run = \"a\"\n[[metrics]]\nmetric = \"per\"\ncomponent = \"layers.9.swiglu.w_2\"\n");
  EXPECT_THROW(run_analysis(bad_layer, store()), ValidationError);
  const auto bad_ref = parse("run = \"a\"\n[[metrics]]\nmetric = \"cka_linear\"\ncomponent = \"layers.0.swiglu.w_2\"\n"
                             "reference = \"step:5\"\n");
  EXPECT_THROW(run_analysis(bad_ref, store()), ValidationError);
  const auto no_run = parse("run = \"zz\"\n[[metrics]]\nmetric = \"per\"\ncomponent = \"lm_head\"\n");
  EXPECT_THROW(run_analysis(no_run, store()), ValidationError);
}

TEST_F(AnalysisTest, StepSelection) {
  const std::vector<std::int64_t> avail = {0, 10, 20, 30, 40};
  StepSelection s;
  EXPECT_EQ(select_steps(s, avail), avail);
  s.stride = 20;
  EXPECT_EQ(select_steps(s, avail), (std::vector<std::int64_t>{0, 20, 40}));
  s.start = 10;
  s.end = 30;
  EXPECT_EQ(select_steps(s, avail), (std::vector<std::int64_t>{10, 30}));
  StepSelection l;
  l.list = {30, 0};
  EXPECT_EQ(select_steps(l, avail), (std::vector<std::int64_t>{0, 30}));
  l.list = {5};
  EXPECT_THROW(select_steps(l, avail), ValidationError);
}

TEST_F(AnalysisTest, OutputIsByteIdenticalAcrossReruns) {
  const auto cfg = parse(R"(
run = "a"
[[metrics]]
metric = "per"
component = "layers.*.ov_circuit"
[[metrics]]
metric = "hoyer"
data = "gradients"
component = "layers.*.attention.o_proj"
)");
  const fs::path out = *root_ / "out" / "series.csv";
  write_series(run_analysis(cfg, store()), out);
  const auto first_csv = store::read_file_bytes(out);
  const auto first_json = store::read_file_bytes(fs::path(out).replace_extension(".json"));
  write_series(run_analysis(cfg, store()), out);
  EXPECT_EQ(store::read_file_bytes(out), first_csv);
  EXPECT_EQ(store::read_file_bytes(fs::path(out).replace_extension(".json")), first_json);
  const std::string text(reinterpret_cast<const char*>(first_csv.data()), first_csv.size());
  EXPECT_TRUE(text.starts_with("run,step,component,metric,value,meta\n"));
  const auto j = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(first_json.data()), first_json.size()));
  EXPECT_EQ(j["rows"].size(), 5u * 2u + 4u * 2u + 1u);  // final step has weights but no gradients
}

TEST_F(AnalysisTest, CompareRunWithItselfHasZeroDeltas) {
  const auto cfg = parse(R"(
run = "a"
[steps]
end = 30
[[metrics]]
metric = "condition_number"
data = "gradients"
component = "layers.*.attention.v_proj"
[[metrics]]
metric = "norm_nuclear"
component = "layers.*.attention.o_proj"
)");
  const auto self = compare_runs("a", "a", cfg, store());
  ASSERT_EQ(self.rows.size(), 2u * 4u * 2u * 2u);
  for (const auto& r : self.rows) {
    ASSERT_TRUE(r.delta.has_value());
    EXPECT_EQ(*r.delta, 0.0);
  }
  const auto ab = compare_runs("a", "b", cfg, store());
  std::size_t nonzero = 0;
  for (const auto& r : ab.rows) nonzero += (r.delta && *r.delta != 0.0) ? 1 : 0;
  EXPECT_GT(nonzero, ab.rows.size() / 2);
  EXPECT_EQ(ab.rows[0].run, "a");
  EXPECT_EQ(ab.rows[1].run, "b");
  EXPECT_EQ(*ab.rows[0].delta, ab.rows[0].value - ab.rows[1].value);
  EXPECT_TRUE(ab.to_csv().starts_with("run,step,component,metric,value,meta,delta\n"));
}

TEST_F(AnalysisTest, CompareReportsMissingSteps) {
  const auto cfg = parse("run = \"a\"\n[steps]\nend = 30\n[[metrics]]\nmetric = \"per\"\ncomponent = \"lm_head\"\n");
  try {
    compare_runs("a", "short", cfg, store());
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run 'short' is missing step(s) 10, 30"), std::string::npos) << msg;
  }
}

TEST(NaturalOrder, NumbersCompareByValue) {
  EXPECT_TRUE(natural_less("layers.2.x", "layers.10.x"));
  EXPECT_FALSE(natural_less("layers.10.x", "layers.2.x"));
  EXPECT_FALSE(natural_less("same", "same"));
  EXPECT_TRUE(natural_less("a", "ab"));
}

TEST(ReferenceParse, Forms) {
  EXPECT_EQ(Reference::parse("previous").mode, Reference::Mode::kPrevious);
  EXPECT_EQ(Reference::parse("step:100").step, 100);
  EXPECT_EQ(Reference::parse("run:base").run, "base");
  EXPECT_EQ(Reference::parse("step:7").text(), "step:7");
  EXPECT_THROW(Reference::parse("step:-1"), ValidationError);
  EXPECT_THROW(Reference::parse("prev"), ValidationError);
}

}  // namespace
}  // namespace dynalab::analysis
