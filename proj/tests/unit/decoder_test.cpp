// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dynalab/core/error.hpp"
#include "dynalab/model/decoder.hpp"
#include "oracle/finite_difference.hpp"
#include "oracle/reference_decoder.hpp"
#include "oracle/test_util.hpp"

namespace dynalab::model {
namespace {

using testing::random_matrix;
using testing::random_tokens;

TEST(ModelConfig, DefaultsAndValidation) {
  ModelConfig c;
  EXPECT_EQ(c.d_model, 768u);
  EXPECT_EQ(c.n_layers, 12u);
  EXPECT_EQ(c.vocab_size, 50304u);
  EXPECT_EQ(c.seq_len, 2048u);
  EXPECT_EQ(c.n_heads, 12u);
  EXPECT_EQ(c.n_kv_heads, 4u);
  EXPECT_EQ(c.d_ff, 3072u);
  EXPECT_DOUBLE_EQ(c.norm_eps, 1e-6);
  EXPECT_DOUBLE_EQ(c.rope_theta, 10000.0);
  EXPECT_NO_THROW(c.validate());

  ModelConfig bad = ModelConfig::tiny();
  bad.n_kv_heads = 3;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = ModelConfig::tiny();
  bad.d_model = 6;  // head dim 3 is odd
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Parameters, NamesArePureFunctionOfConfig) {
  auto layout = parameter_layout(ModelConfig::tiny());
  std::vector<std::string> names;
  for (const auto& p : layout) names.push_back(p.name);
  EXPECT_NE(std::find(names.begin(), names.end(), "layers.1.attention.v_proj"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "layers.0.attention.o_proj"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "layers.1.swiglu.w_2"), names.end());
  EXPECT_EQ(names.front(), "embed.tok");
  EXPECT_EQ(names.back(), "lm_head");
  EXPECT_EQ(layout.size(), 1 + 2 * 9 + 2u);

  auto a = Parameters::initialize(ModelConfig::tiny(), 5);
  auto b = Parameters::initialize(ModelConfig::tiny(), 5);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.at("final_norm.g").values()[3], 1.0);
  auto round = Parameters::from_tensors(a.to_tensors(ModelConfig::tiny()), ModelConfig::tiny());
  EXPECT_EQ(round.fingerprint(), a.fingerprint());
  EXPECT_EQ(a.to_tensors(ModelConfig::tiny()).at("final_norm.g").shape(), Shape{8});
}

TEST(RmsNorm, Examples) {
  std::vector<double> ones(5, 1.0);
  for (double v : rmsnorm(ones, ones, 0.0)) EXPECT_DOUBLE_EQ(v, 1.0);
  auto y = rmsnorm(std::vector<double>{3, -3}, std::vector<double>{1, 1}, 0.0);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
}

TEST(RmsNorm, UnitRmsAfterDividingGain) {
  Matrix x = random_matrix(1, 16, 3, 5.0);
  Matrix g = random_matrix(1, 16, 4);
  for (double& v : g.values()) v = 1.0 + std::abs(v);
  auto y = rmsnorm(x.row(0), g.row(0), 1e-6);
  double ms = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ms += (y[i] / g(0, i)) * (y[i] / g(0, i));
  EXPECT_NEAR(std::sqrt(ms / 16.0), 1.0, 1e-6);
}

TEST(Rope, PositionZeroIsIdentityAndNormPreserved) {
  Matrix x = random_matrix(5, 8, 10);
  std::vector<std::size_t> zeros(5, 0);
  EXPECT_TRUE(testing::bitwise_equal(rope_rotate(x, zeros, 10000.0), x));
  std::vector<std::size_t> pos = {0, 1, 7, 100, 2047};
  Matrix y = rope_rotate(x, pos, 10000.0);
  for (std::size_t r = 0; r < 5; ++r) {
    double nx = 0.0, ny = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      nx += x(r, j) * x(r, j);
      ny += y(r, j) * y(r, j);
    }
    EXPECT_NEAR(std::sqrt(nx), std::sqrt(ny), 1e-12);
  }
  EXPECT_THROW(rope_rotate(Matrix(2, 3), std::vector<std::size_t>{0, 1}, 1e4), DimensionError);
}

TEST(Rope, DotProductDependsOnlyOnOffset) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix q = random_matrix(1, 8, 1000 + trial);
    Matrix k = random_matrix(1, 8, 2000 + trial);
    const std::size_t m = rng.below(200), n = rng.below(200), delta = rng.below(500);
    auto dot = [&](std::size_t pm, std::size_t pn) {
      Matrix a = rope_rotate(q, std::vector<std::size_t>{pm}, 10000.0);
      Matrix b = rope_rotate(k, std::vector<std::size_t>{pn}, 10000.0);
      double s = 0.0;
      for (std::size_t j = 0; j < 8; ++j) s += a(0, j) * b(0, j);
      return s;
    };
    EXPECT_NEAR(dot(m, n), dot(m + delta, n + delta), 1e-9);
  }
}

TEST(SwiGlu, ZeroInputGivesZero) {
  Matrix w0 = random_matrix(6, 4, 1), w1 = random_matrix(6, 4, 2), w2 = random_matrix(4, 6, 3);
  for (double v : swiglu(std::vector<double>(4, 0.0), w0, w1, w2)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(swiglu(std::vector<double>(3, 0.0), w0, w1, w2), DimensionError);
}

TEST(SwiGlu, SaturatedGateActsAsIdentity) {
  // silu(z) -> z once z > 20, so y -> W2 (W0 x ⊙ W1 x).
  const std::size_t d = 4;
  Matrix w0 = Matrix::identity(d);
  for (double& v : w0.values()) v *= 100.0;
  Matrix w1 = random_matrix(d, d, 5), w2 = random_matrix(d, d, 6);
  std::vector<double> x = {0.5, 0.3, 0.9, 0.25};
  auto y = swiglu(x, w0, w1, w2);
  for (std::size_t o = 0; o < d; ++o) {
    double expect = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
      double up = 0.0;
      for (std::size_t i = 0; i < d; ++i) up += w1(f, i) * x[i];
      expect += w2(o, f) * (100.0 * x[f]) * up;
    }
    EXPECT_NEAR(y[o], expect, 1e-9 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Attention, EqualHeadsMatchesMultiHeadOracle) {
  ModelConfig c = ModelConfig::tiny();
  c.n_kv_heads = c.n_heads;
  Matrix x = random_matrix(3 * 5, c.d_model, 1);
  Matrix wq = random_matrix(8, 8, 2, 0.5), wk = random_matrix(8, 8, 3, 0.5);
  Matrix wv = random_matrix(8, 8, 4, 0.5), wo = random_matrix(8, 8, 5, 0.5);
  auto out = gqa_attention(x, 3, {wq, wk, wv, wo}, c);
  double worst = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    testing::Rows seq_rows;
    for (std::size_t s = 0; s < 5; ++s) {
      auto r = x.row(b * 5 + s);
      seq_rows.emplace_back(r.begin(), r.end());
    }
    auto ref = testing::ref_attention(seq_rows, wq, wk, wv, wo, c.n_heads, c.n_heads, c.rope_theta);
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t j = 0; j < 8; ++j) worst = std::max(worst, std::abs(ref[s][j] - out.output(b * 5 + s, j)));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Attention, SinglePositionAttendsOnlyToItself) {
  ModelConfig c = ModelConfig::tiny();
  Matrix x = random_matrix(1, 8, 9);
  Matrix wq = random_matrix(8, 8, 2), wk = random_matrix(4, 8, 3);
  Matrix wv = random_matrix(4, 8, 4), wo = random_matrix(8, 8, 5);
  auto out = gqa_attention(x, 1, {wq, wk, wv, wo}, c);
  // Softmax over one position is 1, so each head's context is its kv head's value.
  Matrix ctx(1, 8);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t e = 0; e < 4; ++e) ctx(0, h * 4 + e) = out.v(0, e);
  EXPECT_LT(testing::max_abs(out.output, testing::naive_matmul(ctx, testing::naive_transpose(wo))), 1e-14);
}

TEST(Attention, HandOracleTwoHeadsOneKv) {
  // batch 1, seq 3, d 4, two query heads sharing one kv head (hd 2).
  ModelConfig c;
  c.d_model = 4;
  c.n_heads = 2;
  c.n_kv_heads = 1;
  c.n_layers = 1;
  c.vocab_size = 4;
  c.seq_len = 3;
  c.d_ff = 4;
  Matrix x = Matrix::from_rows({{0.1, -0.2, 0.3, 0.4}, {0.5, 0.1, -0.3, 0.2}, {-0.4, 0.2, 0.1, -0.1}});
  Matrix wq = Matrix::from_rows({{0.1, 0.2, 0, 0}, {0, 0.1, 0.3, 0}, {0.2, 0, 0, 0.1}, {0, 0, 0.2, 0.2}});
  Matrix wk = Matrix::from_rows({{0.3, 0, 0.1, 0}, {0, 0.2, 0, 0.1}});
  Matrix wv = Matrix::from_rows({{0.5, 0.1, 0, 0}, {0, 0, 0.4, 0.2}});
  Matrix wo = Matrix::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  auto out = gqa_attention(x, 1, {wq, wk, wv, wo}, c);

  // Straight-line evaluation: head dim 2 has one rotary pair with angle = pos.
  double q[3][4], k[3][2], v[3][2];
  for (int s = 0; s < 3; ++s) {
    for (int o = 0; o < 4; ++o) {
      q[s][o] = 0;
      for (int i = 0; i < 4; ++i) q[s][o] += wq(o, i) * x(s, i);
    }
    for (int o = 0; o < 2; ++o) {
      k[s][o] = v[s][o] = 0;
      for (int i = 0; i < 4; ++i) {
        k[s][o] += wk(o, i) * x(s, i);
        v[s][o] += wv(o, i) * x(s, i);
      }
    }
    const double cs = std::cos(double(s)), sn = std::sin(double(s));
    for (int h = 0; h < 2; ++h) {
      const double a = q[s][2 * h], b = q[s][2 * h + 1];
      q[s][2 * h] = a * cs - b * sn;
      q[s][2 * h + 1] = a * sn + b * cs;
    }
    const double a = k[s][0], b = k[s][1];
    k[s][0] = a * cs - b * sn;
    k[s][1] = a * sn + b * cs;
  }
  for (int i = 0; i < 3; ++i) {
    for (int h = 0; h < 2; ++h) {
      double w[3], z = 0;
      for (int j = 0; j <= i; ++j) {
        w[j] = std::exp((q[i][2 * h] * k[j][0] + q[i][2 * h + 1] * k[j][1]) / std::sqrt(2.0));
        z += w[j];
      }
      for (int e = 0; e < 2; ++e) {
        double ctx = 0;
        for (int j = 0; j <= i; ++j) ctx += w[j] / z * v[j][e];
        EXPECT_NEAR(out.output(i, 2 * h + e), ctx, 1e-15);
      }
    }
  }
}

TEST(Forward, InitialLossNearLogVocab) {
  ModelConfig c = ModelConfig::tiny();
  auto p = Parameters::initialize(c, 1);
  auto t = forward(random_tokens(4, 9, c.vocab_size, 2), p, c);
  EXPECT_NEAR(t.loss, std::log(32.0), 0.05 * std::log(32.0));
}

TEST(Forward, BatchPermutationInvariant) {
  ModelConfig c = ModelConfig::tiny();
  auto p = testing::lively_parameters(c, 3);
  TokenBatch a = random_tokens(4, 9, c.vocab_size, 4);
  TokenBatch b(4, 9, std::vector<std::uint32_t>(36));
  const std::size_t perm[] = {2, 0, 3, 1};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t s = 0; s < 9; ++s) b(r, s) = a(perm[r], s);
  EXPECT_NEAR(forward(a, p, c).loss, forward(b, p, c).loss, 1e-12);
}

TEST(Forward, MatchesStraightLineReimplementation) {
  ModelConfig c = ModelConfig::tiny();
  auto p = testing::lively_parameters(c, 5);
  TokenBatch tokens = random_tokens(3, 9, c.vocab_size, 6);
  auto trace = forward(tokens, p, c);
  auto ref = testing::reference_forward(tokens, p, c);
  EXPECT_NEAR(trace.loss, ref.loss, 1e-10);
  double worst = 0.0;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t s = 0; s < 8; ++s)
      for (std::size_t v = 0; v < 32; ++v)
        worst = std::max(worst, std::abs(trace.logits(b * 8 + s, v) - ref.logits[b][s][v]));
  EXPECT_LT(worst, 1e-10);
}

TEST(Forward, RejectsOutOfRangeIds) {
  ModelConfig c = ModelConfig::tiny();
  auto p = Parameters::initialize(c, 1);
  TokenBatch t = random_tokens(1, 9, c.vocab_size, 2);
  t(0, 3) = 32;
  EXPECT_THROW(forward(t, p, c), DataError);
  EXPECT_THROW(forward(random_tokens(1, 10, 32, 1), p, c), DimensionError);  // seq 9 > 8
}

TEST(Forward, CapturesRequestedSublayerOutputs) {
  ModelConfig c = ModelConfig::tiny();
  auto p = Parameters::initialize(c, 1);
  auto t = forward(random_tokens(2, 9, 32, 3), p, c, default_capture_list());
  ASSERT_EQ(t.activations.size(), 6u);
  EXPECT_EQ(t.activations.at("layers.0.attention.v_proj").shape(), (Shape{2, 8, 4}));
  EXPECT_EQ(t.activations.at("layers.1.attention.o_proj").shape(), (Shape{2, 8, 8}));
  EXPECT_EQ(t.activations.at("layers.1.swiglu.w_2").shape(), (Shape{2, 8, 8}));
  EXPECT_THROW(forward(random_tokens(2, 9, 32, 3), p, c, {"attention.nope"}), ValidationError);
}

TEST(Forward, CausalityIsExact) {
  ModelConfig c = ModelConfig::tiny();
  auto p = testing::lively_parameters(c, 8);
  TokenBatch a = random_tokens(1, 9, 32, 9);
  auto ta = forward(a, p, c, capturable_sublayers());
  for (std::size_t i = 0; i < 7; ++i) {
    TokenBatch b = a;
    for (std::size_t s = i + 1; s < 8; ++s) b(0, s) = (b(0, s) + 7) % 32;
    auto tb = forward(b, p, c, capturable_sublayers());
    for (std::size_t pos = 0; pos <= i; ++pos) {
      for (std::size_t v = 0; v < 32; ++v) ASSERT_EQ(ta.logits(pos, v), tb.logits(pos, v));
      for (const auto& [name, act] : ta.activations) {
        const auto& other = tb.activations.at(name);
        const std::size_t w = act.shape()[2];
        for (std::size_t j = 0; j < w; ++j) {
          ASSERT_EQ(act.values<double>()[pos * w + j], other.values<double>()[pos * w + j]) << name;
        }
      }
    }
  }
}

TEST(Backward, FiniteDifferencesAllParameters) {
  ModelConfig c = ModelConfig::tiny();
  auto p = testing::lively_parameters(c, 11);
  auto report = testing::finite_difference_check(random_tokens(2, 9, 32, 12), p, c);
  EXPECT_EQ(report.checked, p.scalar_count());
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_parameter;
}

TEST(Backward, FiniteDifferencesWithFullMultiHead) {
  ModelConfig c = ModelConfig::tiny();
  c.n_kv_heads = 2;
  c.n_layers = 1;
  auto p = testing::lively_parameters(c, 13);
  auto report = testing::finite_difference_check(random_tokens(2, 6, 32, 14), p, c);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_parameter;
}

TEST(Backward, AbsentVocabRowsStillGetSoftmaxGradient) {
  ModelConfig c = ModelConfig::tiny();
  auto p = Parameters::initialize(c, 2);
  TokenBatch t(1, 9, {1, 2, 3, 1, 2, 3, 1, 2, 3});
  auto g = backward(forward(t, p, c), p, c);
  const Matrix& lm = g.params.at("lm_head");
  double row_norm = 0.0;
  for (double v : lm.row(20)) row_norm += v * v;
  EXPECT_GT(row_norm, 0.0);
}

TEST(Backward, LossScaleIsLinear) {
  ModelConfig c = ModelConfig::tiny();
  auto p = testing::lively_parameters(c, 3);
  auto tr = forward(random_tokens(2, 9, 32, 4), p, c);
  auto g1 = backward(tr, p, c);
  auto g2 = backward(tr, p, c, {}, 2.0);
  for (const auto& [name, m] : g1.params) {
    const auto& m2 = g2.params.at(name);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_EQ(2.0 * m.values()[i], m2.values()[i]) << name;
  }
}

TEST(Backward, CapturedGradientsEqualFullGradientEntries) {
  ModelConfig c = ModelConfig::tiny();
  auto p = testing::lively_parameters(c, 3);
  auto caps = default_capture_list();
  auto tr = forward(random_tokens(2, 9, 32, 4), p, c, caps);
  auto g = backward(tr, p, c, caps);
  ASSERT_EQ(g.captured.size(), 6u);
  for (const auto& [name, t] : g.captured) {
    EXPECT_TRUE(t.bitwise_equal(Tensor::from_matrix(g.params.at(name)))) << name;
  }
}

TEST(Backward, StaleTraceRejected) {
  ModelConfig c = ModelConfig::tiny();
  auto p = Parameters::initialize(c, 1);
  auto tr = forward(random_tokens(1, 9, 32, 4), p, c);
  p.at("lm_head")(0, 0) += 1.0;
  EXPECT_THROW(backward(tr, p, c), TrainingError);
}

}  // namespace
}  // namespace dynalab::model
