/*
 * Copyright 2026 The CARD Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>

#include <gtest/gtest.h>

#include "card/diffusion_engine.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

namespace card {
namespace {

using ad::Matrix;
using ad::RowVector;
using ad::Tensor;

TEST(Schedule, LinearEndpointsAndProducts) {
  const auto s = NoiseSchedule::Linear(200, 1e-4, 0.02);
  EXPECT_EQ(s.steps(), 200);
  EXPECT_DOUBLE_EQ(s.Beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.Beta(200), 0.02);
  EXPECT_EQ(s.AlphaBar(0), 1.0);
  double prod = 1.0;
  for (int t = 1; t <= 200; ++t) {
    prod *= 1 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 199.0);
    EXPECT_NEAR(s.AlphaBar(t), prod, 1e-14);
  }
  EXPECT_THROW(s.CheckStep(0), std::out_of_range);
  EXPECT_THROW(s.CheckStep(201), std::out_of_range);
}

TEST(ForwardNoise, NoNoiseLimit) {
  // A single tiny beta keeps alpha_bar(1) within 1e-12 of one.
  NoiseSchedule s(std::vector<double>{1e-24});
  Rng rng = SeededRng(1, "noise");
  RowVector e0 = RowVector::LinSpaced(5, -1, 1);
  EXPECT_TRUE(ForwardNoise(e0, 1, s, rng).noised.isApprox(e0, 1e-11));
}

TEST(ForwardNoise, PureNoiseLimitHasUnitMoments) {
  NoiseSchedule s(std::vector<double>(400, 0.2));
  ASSERT_LT(s.AlphaBar(400), 1e-30);
  Rng rng = SeededRng(2, "noise");
  RowVector e0 = RowVector::Constant(3, 5.0);
  const int n = 20000;
  RowVector mean = RowVector::Zero(3), sq = RowVector::Zero(3);
  for (int i = 0; i < n; ++i) {
    RowVector x = ForwardNoise(e0, 400, s, rng).noised;
    mean += x;
    sq += x.cwiseProduct(x);
  }
  mean /= n;
  sq /= n;
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(mean(j), 0.0, 4 / std::sqrt(n));
    EXPECT_NEAR(sq(j) - mean(j) * mean(j), 1.0, 0.05);
  }
}

TEST(Denoiser, DeterministicOutputs) {
  Rng rng = SeededRng(3, "denoiser");
  ad::ParameterStore store;
  Denoiser f(store, 4, 8, rng);
  RowVector x = testing::RandomMatrix(1, 4, rng), g = testing::RandomMatrix(1, 4, rng);
  EXPECT_EQ(f.Predict(x, g, 7), f.Predict(x, g, 7));
  EXPECT_NE(f.Predict(x, g, 7), f.Predict(x, g, 8));
}

TEST(Cfg, Identities) {
  EXPECT_EQ(CfgCombine(2.0, 1.0, 1.0), 3.0);
  Rng rng = SeededRng(4, "cfg");
  RowVector a = testing::RandomMatrix(1, 6, rng), b = testing::RandomMatrix(1, 6, rng);
  EXPECT_EQ(CfgCombine(a, b, 0.0), a);
  EXPECT_TRUE(CfgCombine(a, a, 2.5).isApprox(a, 1e-15));
}

TEST(DiffusionLoss, PerfectDenoiserIsZero) {
  const auto s = NoiseSchedule::Linear(20, 1e-4, 0.02);
  Rng rng = SeededRng(5, "loss");
  const RowVector e0 = testing::RandomMatrix(1, 4, rng);
  auto oracle = [&](const Tensor&, const Tensor&, int) { return ad::Constant(Matrix(e0)); };
  std::vector<DiffusionExample> batch{{ad::Constant(Matrix(e0)), ad::Constant(Matrix(Matrix::Zero(1, 4)))}};
  EXPECT_EQ(DiffusionLoss(batch, s, oracle, ad::Constant(Matrix(Matrix::Zero(1, 4))), 0.1, rng).scalar(), 0.0);
}

TEST(DiffusionLoss, HandComputedMse) {
  const auto s = NoiseSchedule::Linear(10, 1e-4, 0.02);
  RowVector e0(2), eps(2);
  e0 << 1.0, -2.0;
  eps << 0.5, 0.25;
  // Denoiser returning half its noised input.
  auto half = [](const Tensor& x, const Tensor&, int) { return ad::Scale(x, 0.5); };
  const int t = 6;
  const double ab = s.AlphaBar(t);
  RowVector noised = std::sqrt(ab) * e0 + std::sqrt(1 - ab) * eps;
  const double expected = (e0 - 0.5 * noised).squaredNorm();
  const double got = DiffusionLossTerm(ad::Constant(Matrix(e0)), ad::Constant(Matrix(Matrix::Zero(1, 2))), t, eps,
                                       s, half)
                         .scalar();
  EXPECT_NEAR(got, expected, 1e-14);
}

TEST(DiffusionLoss, FullDropoutAlwaysSubstitutesNull) {
  const auto s = NoiseSchedule::Linear(10, 1e-4, 0.02);
  Rng rng = SeededRng(6, "loss");
  Tensor null_g = ad::Constant(Matrix(Matrix::Constant(1, 3, 7.0)));
  int conditional_calls = 0;
  auto spy = [&](const Tensor& x, const Tensor& g, int) {
    if (g.value()(0, 0) != 7.0) ++conditional_calls;
    return x;
  };
  std::vector<DiffusionExample> batch;
  for (int i = 0; i < 16; ++i) {
    batch.push_back({ad::Constant(testing::RandomMatrix(1, 3, rng)), ad::Constant(Matrix(Matrix::Zero(1, 3)))});
  }
  DiffusionDraws draws;
  DiffusionLoss(batch, s, spy, null_g, 1.0, rng, &draws);
  EXPECT_EQ(draws.null_substitutions, 16);
  EXPECT_EQ(conditional_calls, 0);
}

TEST(DiffusionLoss, GradientMatchesFiniteDifferences) {
  Rng rng = SeededRng(7, "loss");
  ad::ParameterStore store;
  Denoiser f(store, 4, 6, rng);
  const auto s = NoiseSchedule::Linear(10, 1e-4, 0.02);
  Tensor e0 = ad::Leaf(testing::RandomMatrix(1, 4, rng));
  Tensor g = ad::Leaf(testing::RandomMatrix(1, 4, rng));
  const RowVector eps = testing::RandomMatrix(1, 4, rng);
  std::vector<Tensor> wrt{e0, g};
  for (const auto& e : store.entries()) wrt.push_back(e.tensor);
  for (int t : {1, 5, 10}) {
    auto loss = [&] { return DiffusionLossTerm(e0, g, t, eps, s, f); };
    EXPECT_LT(testing::MaxGradientError(loss, wrt), 1e-4) << "t = " << t;
  }
}

TEST(Sampling, SingleStepReturnsCombinedEstimate) {
  NoiseSchedule s(std::vector<double>{0.02});
  RowVector g = RowVector::Constant(3, 1.0), phi = RowVector::Zero(3);
  auto predict = [](const RowVector& x, const RowVector& cond, int) { return RowVector(0.5 * x + cond); };
  Rng a = SeededRng(8, "sample"), b = SeededRng(8, "sample");
  const RowVector out = GuidedSampleWith(predict, g, phi, s, 1.5, a);
  const RowVector x = StandardNormal(3, b);
  EXPECT_TRUE(out.isApprox(CfgCombine(RowVector(0.5 * x + g), RowVector(0.5 * x + phi), 1.5), 1e-15));
}

TEST(Sampling, ReproducibleUnderSeed) {
  Rng init = SeededRng(9, "denoiser");
  ad::ParameterStore store;
  Denoiser f(store, 4, 8, init);
  const auto s = NoiseSchedule::Linear(15, 1e-4, 0.02);
  RowVector g = testing::RandomMatrix(1, 4, init), phi = testing::RandomMatrix(1, 4, init);
  Rng a = SeededRng(10, "sample"), b = SeededRng(10, "sample");
  EXPECT_EQ(GuidedSample(f, g, phi, s, 1.0, a), GuidedSample(f, g, phi, s, 1.0, b));
}

TEST(StepEmbedding, DistinctSteps) {
  EXPECT_EQ(StepEmbedding(3, 8).size(), 8);
  EXPECT_GT((StepEmbedding(3, 8) - StepEmbedding(4, 8)).norm(), 1e-3);
}

}  // namespace
}  // namespace card
