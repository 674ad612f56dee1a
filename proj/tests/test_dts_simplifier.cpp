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

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "card/dts_simplifier.hpp"
#include "card/stability_router.hpp"
#include "test_util.hpp"

namespace card {
namespace {

// Step-by-step simulation of the posted rule: draw both sides for each
// interior position in order, collect dual-side candidates, then remove the
// best-evidence ones up to the budget.
std::set<int> ReferenceRemovals(const std::vector<double>& con, const DtsParams& p, Rng& rng) {
  const int len = static_cast<int>(con.size()) + 1;
  const int keep_floor = std::max(p.min_history,
                                  static_cast<int>(std::ceil((1.0 - p.max_removal_frac) * len - 1e-9)));
  const int budget = std::max(0, len - std::min(len, keep_floor));
  std::vector<std::pair<double, int>> redundant;
  for (int n = 1; n <= len - 2; ++n) {
    const double l = rng.Beta(p.alpha0 + p.kappa * con[n - 1], p.beta0 + p.kappa * (1 - con[n - 1]));
    const double r = rng.Beta(p.alpha0 + p.kappa * con[n], p.beta0 + p.kappa * (1 - con[n]));
    if (l > 0.5 && r > 0.5) redundant.push_back({(con[n - 1] + con[n]) / 2, n});
  }
  std::stable_sort(redundant.begin(), redundant.end(),
                   [](auto& a, auto& b) { return a.first > b.first; });
  std::set<int> out;
  for (int i = 0; i < budget && i < static_cast<int>(redundant.size()); ++i) out.insert(redundant[i].second);
  return out;
}

std::set<int> Removed(const DtsResult& r) {
  std::set<int> out;
  for (std::size_t i = 0; i < r.removed.size(); ++i) {
    if (r.removed[i]) out.insert(static_cast<int>(i));
  }
  return out;
}

TEST(Dts, ZeroRemovalFractionKeepsEverything) {
  DtsParams p;
  p.max_removal_frac = 0.0;
  Rng rng = SeededRng(1, "dts");
  std::vector<double> con(9, 1.0 / 9);
  const auto r = DtsSimplify(con, p, rng);
  EXPECT_EQ(r.kept.size(), 10u);
}

TEST(Dts, LengthTwoIsIdentity) {
  Rng rng = SeededRng(1, "dts");
  const auto r = DtsSimplify(std::vector<double>{1.0}, DtsParams{}, rng);
  EXPECT_EQ(r.kept, (std::vector<int>{0, 1}));
}

TEST(Dts, IdenticalInteriorMatchesReferenceSimulation) {
  Eigen::MatrixXd h(5, 3);
  h << 1, 0, 0,   //
      0, 1, 1,    //
      0, 1, 1,    //
      0, 1, 1,    //
      0, 0, -1;
  const auto con = ComputeContinuity(h);
  DtsParams p;
  p.max_removal_frac = 0.5;
  // High pseudo-count so the identical-pair evidence dominates the prior.
  p.kappa = 10;
  int removals_seen = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    Rng a = SeededRng(seed, "dts");
    Rng b = SeededRng(seed, "dts");
    const auto result = DtsSimplify(con, p, a);
    const auto expected = ReferenceRemovals(con, p, b);
    ASSERT_EQ(Removed(result), expected) << "seed " << seed;
    removals_seen += static_cast<int>(expected.size());
  }
  EXPECT_GT(removals_seen, 0);
}

TEST(Dts, InvariantsOnRandomInputs) {
  Rng data = SeededRng(5, "dts/data");
  for (int trial = 0; trial < 300; ++trial) {
    const auto len = data.UniformInt(2, 30);
    DtsParams p;
    p.max_removal_frac = data.Uniform() * 0.9;
    p.min_history = static_cast<int>(data.UniformInt(2, 4));
    // Short histories make continuities large enough for removals to happen.
    const auto con = ComputeContinuity(testing::RandomMatrix(len, 3, data));
    Rng rng = SeededRng(static_cast<std::uint64_t>(trial), "dts");
    const auto r = DtsSimplify(con, p, rng);
    const int floor = std::min<int>(len, std::max<int>(p.min_history,
                                    static_cast<int>(std::ceil((1 - p.max_removal_frac) * len - 1e-9))));
    EXPECT_GE(static_cast<int>(r.kept.size()), floor);
    EXPECT_TRUE(std::is_sorted(r.kept.begin(), r.kept.end()));
    EXPECT_EQ(r.kept.front(), 0);
    EXPECT_EQ(r.kept.back(), len - 1);
    EXPECT_EQ(r.kept.size() + Removed(r).size(), static_cast<std::size_t>(len));
  }
}

TEST(Dts, DeterministicUnderSeed) {
  Rng data = SeededRng(6, "dts/data");
  const auto con = ComputeContinuity(testing::RandomMatrix(6, 2, data));
  DtsParams p;
  p.max_removal_frac = 0.6;
  Rng a = SeededRng(9, "dts"), b = SeededRng(9, "dts");
  EXPECT_EQ(DtsSimplify(con, p, a).kept, DtsSimplify(con, p, b).kept);
}

TEST(Dts, MinimumKeptFormula) {
  DtsParams p;
  p.max_removal_frac = 0.3;
  p.min_history = 2;
  EXPECT_EQ(MinimumKept(10, p), 7);
  EXPECT_EQ(MinimumKept(2, p), 2);
  EXPECT_EQ(MinimumKept(3, p), 3);  // ceil(2.1) = 3
}

}  // namespace
}  // namespace card
