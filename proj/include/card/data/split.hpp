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

#include <vector>

#include "card/core/types.hpp"

namespace card::data {

struct LeaveOneOutSplit {
  std::vector<Sample> train;
  std::vector<Sample> valid;
  std::vector<Sample> test;
  std::size_t skipped_short_history = 0;  // candidates with history < min_history
};

// Test target = last item, valid target = second to last, train targets = the
// earlier items. Every candidate uses the full strict prefix as its history and
// is kept only when that history has at least `min_history` items.
inline LeaveOneOutSplit SplitLeaveOneOut(const std::vector<InteractionSequence>& sequences,
                                         std::size_t min_history = 2) {
  LeaveOneOutSplit split;
  auto emit = [&](std::vector<Sample>& out, std::size_t user, const InteractionSequence& seq,
                  std::size_t target_pos) {
    if (target_pos < min_history) {
      ++split.skipped_short_history;
      return;
    }
    Sample s;
    s.user = user;
    s.history.assign(seq.items.begin(), seq.items.begin() + static_cast<std::ptrdiff_t>(target_pos));
    s.target = seq.items[target_pos];
    out.push_back(std::move(s));
  };
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    const auto& seq = sequences[u];
    const std::size_t n = seq.items.size();
    if (n < 3) throw DataError("sequence '" + seq.user_id + "' shorter than 3");
    for (std::size_t pos = 1; pos + 2 < n; ++pos) emit(split.train, u, seq, pos);
    emit(split.valid, u, seq, n - 2);
    emit(split.test, u, seq, n - 1);
  }
  return split;
}

}  // namespace card::data
