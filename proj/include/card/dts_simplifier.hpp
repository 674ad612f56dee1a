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

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "card/core/config.hpp"
#include "card/core/rng.hpp"

namespace card {

struct DtsResult {
  std::vector<int> kept;           // original positions, ascending
  std::vector<bool> removed;       // per history position
};

// Lower bound on how many history items survive simplification.
inline int MinimumKept(int history_len, const DtsParams& params) {
  const double raw = (1.0 - params.max_removal_frac) * history_len;
  // Guard against 0.7 * 10 = 7.000000000000001.
  const int frac_floor = static_cast<int>(std::ceil(raw - 1e-9));
  return std::min(history_len, std::max(params.min_history, frac_floor));
}

// Dual-side Thompson sampling over adjacent continuities. Each interior item
// gets one Beta posterior draw per side, evidence being the continuity of the
// pair on that side; the item is redundant only when both draws exceed 1/2.
// Redundant items are dropped highest-evidence first within the removal
// budget. Draw order: for each interior position ascending, left then right.
inline DtsResult DtsSimplify(std::span<const double> con, const DtsParams& params, Rng& rng) {
  const int length = static_cast<int>(con.size()) + 1;
  DtsResult result;
  result.removed.assign(static_cast<std::size_t>(length), false);
  const int budget = length - MinimumKept(length, params);
  if (budget > 0) {
    struct Candidate {
      int position;
      double evidence;
    };
    std::vector<Candidate> candidates;
    for (int n = 1; n + 1 < length; ++n) {
      const double left = con[n - 1];
      const double right = con[n];
      const double theta_left = rng.Beta(params.alpha0 + left * params.kappa,
                                         params.beta0 + (1.0 - left) * params.kappa);
      const double theta_right = rng.Beta(params.alpha0 + right * params.kappa,
                                          params.beta0 + (1.0 - right) * params.kappa);
      if (std::min(theta_left, theta_right) > 0.5) {
        candidates.push_back({n, 0.5 * (left + right)});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.evidence > b.evidence; });
    for (int i = 0; i < budget && i < static_cast<int>(candidates.size()); ++i) {
      result.removed[candidates[i].position] = true;
    }
  }
  for (int n = 0; n < length; ++n) {
    if (!result.removed[n]) result.kept.push_back(n);
  }
  return result;
}

}  // namespace card
