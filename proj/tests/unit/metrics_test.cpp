// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "dynalab/core/error.hpp"
#include "dynalab/metrics/metrics.hpp"
#include "oracle/metric_oracles.hpp"
#include "oracle/test_util.hpp"

namespace dynalab::metrics {
namespace {

using testing::random_matrix;

std::string error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const MetricError& e) {
    return e.code();
  }
  return "";
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix rank_one(std::size_t m, std::size_t n, std::uint64_t seed) {
  const Matrix u = random_matrix(m, 1, seed);
  const Matrix v = random_matrix(1, n, seed + 1);
  return testing::naive_matmul(u, v);
}

TEST(Gini, UniformAndOneHot) {
  const std::vector<double> uniform = {1, 1, 1, 1};
  const std::vector<double> one_hot = {0, 0, 0, 1};
  EXPECT_EQ(gini(uniform).value, 0.0);
  EXPECT_EQ(gini(one_hot).value, 0.75);
}

TEST(Gini, ScaleInvarianceAndRange) {
  const Matrix x = random_matrix(7, 9, 1);
  const double g = gini(x.values()).value;
  EXPECT_EQ(gini(scaled(x, 2.0).values()).value, g);
  EXPECT_EQ(gini(scaled(x, 0.125).values()).value, g);
  EXPECT_NEAR(gini(scaled(x, 3.7).values()).value, g, 1e-14);
  EXPECT_GE(g, 0.0);
  EXPECT_LT(g, 1.0);
  // Sign does not matter.
  EXPECT_EQ(gini(scaled(x, -1.0).values()).value, g);
}

TEST(Gini, RejectsAllZero) {
  const std::vector<double> zeros(5, 0.0);
  EXPECT_EQ(error_code([&] { gini(zeros); }), "all_zero");
}

TEST(Hoyer, UniformAndOneHot) {
  EXPECT_EQ(hoyer(std::vector<double>{1, 1, 1, 1}).value, 0.0);
  EXPECT_EQ(hoyer(std::vector<double>(9, -2.5)).value, 0.0);
  EXPECT_EQ(hoyer(std::vector<double>{0, 0, 0, 1}).value, 1.0);
  EXPECT_EQ(hoyer(std::vector<double>{0, -4, 0, 0, 0}).value, 1.0);
}

TEST(Hoyer, ScaleInvarianceAndErrors) {
  const Matrix x = random_matrix(5, 6, 2);
  const double h = hoyer(x.values()).value;
  EXPECT_EQ(hoyer(scaled(x, 4.0).values()).value, h);
  EXPECT_NEAR(hoyer(scaled(x, 0.3).values()).value, h, 1e-14);
  EXPECT_GE(h, 0.0);
  EXPECT_LE(h, 1.0);
  EXPECT_EQ(error_code([] { hoyer(std::vector<double>{3.0}); }), "too_few_elements");
  EXPECT_EQ(error_code([] { hoyer(std::vector<double>{0.0, 0.0}); }), "all_zero");
}

TEST(ConditionNumber, KnownValues) {
  EXPECT_EQ(condition_number(Matrix::identity(5)).value, 1.0);
  EXPECT_EQ(condition_number(Matrix::from_rows({{3, 0}, {0, 1}})).value, 3.0);
  const auto singular = condition_number(Matrix::from_rows({{1, 1}, {1, 1}}));
  EXPECT_EQ(singular.value, std::numeric_limits<double>::infinity());
  EXPECT_EQ(singular.meta["near_null"], 1);
  EXPECT_EQ(singular.meta["rank"], 1);
  EXPECT_EQ(error_code([] { condition_number(Matrix(3, 2)); }), "zero_matrix");
}

TEST(ConditionNumber, ScaleInvariantAndAtLeastOne) {
  const Matrix a = random_matrix(6, 4, 3);
  const double k = condition_number(a).value;
  EXPECT_GE(k, 1.0);
  EXPECT_NEAR(condition_number(scaled(a, 17.0)).value / k, 1.0, 1e-10);
  EXPECT_NEAR(condition_number(testing::naive_transpose(a)).value / k, 1.0, 1e-10);
}

TEST(Per, IdentityAndRankOne) {
  for (std::size_t n : {1, 2, 5, 8}) EXPECT_NEAR(per(Matrix::identity(n)).value, 1.0, 1e-14) << n;
  for (std::size_t r : {2, 3, 6}) {
    EXPECT_NEAR(per(rank_one(r, r + 2, r)).value, 1.0 / static_cast<double>(r), 1e-12) << r;
  }
}

TEST(Per, MatchesEntropyOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix a = random_matrix(8, 8, 100 + seed);
    const double expected = testing::entropy_per(testing::gram_singular_values(a), 8);
    EXPECT_NEAR(per(a).value, expected, 1e-10) << seed;
  }
  const Matrix wide = random_matrix(4, 9, 7);
  const auto v = per(wide, PerDivisor::kMaxDim);
  EXPECT_NEAR(v.value, testing::entropy_per(testing::gram_singular_values(wide), 9), 1e-10);
  EXPECT_EQ(v.meta["divisor"], "max_dim");
  EXPECT_EQ(v.meta["divisor_value"], 9);
  EXPECT_GT(per(wide).value, 0.0);
  EXPECT_LE(per(wide).value, 1.0);
  EXPECT_EQ(error_code([] { per(Matrix(2, 2)); }), "zero_matrix");
}

TEST(CkaLinear, SelfSimilarityAndInvariances) {
  const Matrix x = random_matrix(30, 5, 11);
  const Matrix y = random_matrix(30, 7, 12);
  EXPECT_NEAR(cka_linear(x, x).value, 1.0, 1e-12);
  const double base = cka_linear(x, y).value;
  const Matrix q = testing::random_orthogonal(5, 13);
  EXPECT_NEAR(cka_linear(testing::naive_matmul(x, q), y).value, base, 1e-10);
  EXPECT_NEAR(cka_linear(scaled(x, 9.5), scaled(y, 0.01)).value, base, 1e-10);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
}

TEST(CkaLinear, MatchesHsicFormulation) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Matrix x = random_matrix(20, 5, 200 + seed);
    Matrix y = random_matrix(20, 3, 300 + seed);
    for (std::size_t i = 0; i < 20; ++i) y(i, 0) += 2.0 * x(i, 1);  // some shared structure
    EXPECT_NEAR(cka_linear(x, y).value, testing::hsic_linear_cka(x, y), 1e-10) << seed;
  }
}

TEST(CkaLinear, Errors) {
  Matrix same(4, 3, 2.0);
  EXPECT_EQ(error_code([&] { cka_linear(same, random_matrix(4, 3, 1)); }), "zero_variance");
  EXPECT_EQ(error_code([] { cka_linear(random_matrix(4, 3, 1), random_matrix(5, 3, 1)); }), "row_mismatch");
  EXPECT_EQ(error_code([] { cka_linear(random_matrix(1, 3, 1), random_matrix(1, 3, 2)); }), "too_few_rows");
}

TEST(CkaRbf, SelfSimilarityAndRowPermutation) {
  const Matrix x = random_matrix(12, 4, 21);
  const Matrix y = random_matrix(12, 6, 22);
  EXPECT_NEAR(cka_rbf(x, x).value, 1.0, 1e-12);
  const double base = cka_rbf(x, y).value;
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
  Matrix xp(12, 4), yp(12, 6);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 4; ++j) xp(i, j) = x(perm[i], j);
    for (std::size_t j = 0; j < 6; ++j) yp(i, j) = y(perm[i], j);
  }
  EXPECT_EQ(cka_rbf(xp, yp).value, base);
  EXPECT_NEAR(cka_rbf(scaled(x, 3.0), y).value, base, 1e-10);
}

TEST(CkaRbf, MatchesDoubleLoopOracleAtFourRows) {
  const Matrix x = random_matrix(4, 3, 31);
  const Matrix y = random_matrix(4, 2, 32);
  for (double mult : {1.0, 0.5, 2.0}) {
    const double expected =
        testing::hsic_cka(testing::double_loop_rbf_gram(x, mult), testing::double_loop_rbf_gram(y, mult));
    EXPECT_NEAR(cka_rbf(x, y, mult).value, expected, 1e-12) << mult;
  }
}

TEST(CkaRbf, Degenerate) {
  EXPECT_EQ(error_code([] { cka_rbf(Matrix(5, 2, 1.0), random_matrix(5, 2, 1)); }), "degenerate");
  EXPECT_EQ(error_code([] { cka_rbf(random_matrix(2, 2, 1), random_matrix(2, 2, 2)); }), "too_few_rows");
}

TEST(Pwcca, SelfAndOrthogonalMap) {
  const Matrix x = random_matrix(50, 6, 41);
  EXPECT_NEAR(pwcca(x, x).value, 1.0, 1e-8);
  const Matrix q = testing::random_orthogonal(6, 42);
  EXPECT_NEAR(pwcca(x, testing::naive_matmul(x, q)).value, 1.0, 1e-8);
  const Matrix y = random_matrix(50, 4, 43);
  const double v = pwcca(x, y).value;
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
}

TEST(Pwcca, IndependentNoiseStaysBelowHalf) {
  std::vector<double> values;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    values.push_back(pwcca(random_matrix(1000, 4, 500 + seed), random_matrix(1000, 4, 900 + seed)).value);
  }
  std::sort(values.begin(), values.end());
  const double median = 0.5 * (values[9] + values[10]);
  EXPECT_LT(median, 0.5);
  EXPECT_GT(median, 0.0);
}

TEST(Pwcca, TruncatesDuplicatedColumnsAndChecksRows) {
  Matrix x = random_matrix(40, 4, 51);
  for (std::size_t i = 0; i < 40; ++i) x(i, 3) = x(i, 0);
  const auto v = pwcca(x, x);
  EXPECT_EQ(v.meta["rank_x"], 3);
  EXPECT_EQ(v.meta["truncated_x"], 1);
  EXPECT_NEAR(v.value, 1.0, 1e-8);
  EXPECT_EQ(error_code([] { pwcca(random_matrix(4, 4, 1), random_matrix(4, 4, 2)); }), "too_few_rows");
  EXPECT_EQ(error_code([] { pwcca(Matrix(10, 2, 1.0), random_matrix(10, 2, 2)); }), "rank_deficient");
}

TEST(Norms, IdentityAndOrdering) {
  const auto n = norms(Matrix::identity(6));
  EXPECT_EQ(n.frobenius, std::sqrt(6.0));
  EXPECT_EQ(n.nuclear, 6.0);
  EXPECT_EQ(n.infinity, 1.0);
  const Matrix a = random_matrix(5, 3, 61);
  const auto r = norms(a);
  EXPECT_GE(r.nuclear, r.frobenius);
  EXPECT_GE(r.frobenius, 0.0);
}

TEST(Norms, NuclearMatchesSingularValueSum) {
  const Matrix a = random_matrix(6, 4, 62);
  double expected = 0.0;
  for (double s : testing::gram_singular_values(a)) expected += s;
  EXPECT_NEAR(norms(a).nuclear, expected, 1e-10);
}

TEST(Norms, InfinityVariants) {
  const Matrix a = Matrix::from_rows({{1, -2}, {-3, 0.5}});
  EXPECT_EQ(norms(a).infinity, 3.5);
  EXPECT_EQ(norms(a, InfinityNorm::kMaxAbsEntry).infinity, 3.0);
}

TEST(Registry, NamesRoundTripAndSuggest) {
  for (MetricId id : all_metrics()) EXPECT_EQ(parse_metric(metric_name(id)), id);
  try {
    parse_metric("condition_nmber");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("did you mean 'condition_number'?"), std::string::npos);
  }
  EXPECT_EQ(parse_data_kind("gradients"), DataKind::kGradients);
  EXPECT_THROW(parse_data_kind("grads"), ValidationError);
}

TEST(Registry, AdmissibleDataKinds) {
  using enum DataKind;
  for (MetricId id : {MetricId::kCkaLinear, MetricId::kCkaRbf, MetricId::kPwcca}) {
    EXPECT_TRUE(admissible(id, kActivations));
    EXPECT_FALSE(admissible(id, kWeights));
    EXPECT_FALSE(admissible(id, kGradients));
  }
  EXPECT_TRUE(admissible(MetricId::kPer, kWeights));
  EXPECT_TRUE(admissible(MetricId::kPer, kGradients));
  EXPECT_FALSE(admissible(MetricId::kPer, kActivations));
  for (MetricId id : {MetricId::kConditionNumber, MetricId::kGini, MetricId::kHoyer, MetricId::kNormFrobenius,
                      MetricId::kNormNuclear, MetricId::kNormInfinity}) {
    for (DataKind k : {kWeights, kActivations, kGradients}) EXPECT_TRUE(admissible(id, k));
  }
}

TEST(Compute, RejectsInadmissibleRequests) {
  const Tensor w = Tensor::from_matrix(random_matrix(6, 6, 1));
  EXPECT_THROW(compute_similarity(MetricId::kPwcca, DataKind::kWeights, w, w), ValidationError);
  EXPECT_THROW(compute(MetricId::kPer, DataKind::kActivations, w), ValidationError);
  EXPECT_THROW(compute(MetricId::kCkaLinear, DataKind::kActivations, w), ValidationError);
  EXPECT_THROW(compute_similarity(MetricId::kGini, DataKind::kWeights, w, w), ValidationError);
}

TEST(Compute, FlattensHigherRankAndIsDeterministic) {
  const Matrix flat = random_matrix(3, 8, 71);
  const Tensor t = Tensor::from_matrix(flat, {3, 2, 4});
  const auto a = compute(MetricId::kPer, DataKind::kGradients, t);
  const auto b = compute(MetricId::kPer, DataKind::kGradients, t);
  EXPECT_EQ(a.value, per(flat).value);
  EXPECT_EQ(std::memcmp(&a.value, &b.value, sizeof(double)), 0);
  EXPECT_EQ(a.meta, b.meta);
  EXPECT_EQ(a.meta["matricized"], (Shape{3, 8}));

  const Tensor act = Tensor::from_matrix(random_matrix(12, 4, 72), {3, 4, 4});
  const auto s = compute_similarity(MetricId::kCkaLinear, DataKind::kActivations, act, act);
  EXPECT_NEAR(s.value, 1.0, 1e-12);
  EXPECT_EQ(s.meta["rows"], 12);
}

TEST(Compute, NonFiniteInputIsAMetricError) {
  Matrix m = random_matrix(3, 3, 1);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(error_code([&] { compute(MetricId::kGini, DataKind::kWeights, Tensor::from_matrix(m)); }), "non_finite");
}

TEST(Options, ParseFromJson) {
  const auto o = options_from_json({{"per_divisor", "max_dim"}, {"infinity_norm", "max_abs_entry"}, {"bandwidth", 0.5}});
  EXPECT_EQ(o.per_divisor, PerDivisor::kMaxDim);
  EXPECT_EQ(o.infinity_norm, InfinityNorm::kMaxAbsEntry);
  EXPECT_EQ(o.rbf_bandwidth, 0.5);
  EXPECT_THROW(options_from_json({{"bandwith", 0.5}}), ValidationError);
  EXPECT_THROW(options_from_json({{"per_divisor", "rank"}}), ValidationError);
}

}  // namespace
}  // namespace dynalab::metrics
