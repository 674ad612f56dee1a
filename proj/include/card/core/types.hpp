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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace card {

// Dense item index produced by ingest / synthetic generation (0-based).
using ItemIndex = std::int32_t;

// Rows of the shared embedding table. Items start after the special tokens.
inline constexpr std::int32_t kPadRow = 0;
inline constexpr std::int32_t kNullGuidanceRow = 1;
inline constexpr std::int32_t kNumSpecialRows = 2;

inline constexpr std::int32_t ItemRow(ItemIndex item) { return item + kNumSpecialRows; }

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One user's chronologically ordered interactions.
struct InteractionSequence {
  std::string user_id;
  std::vector<ItemIndex> items;

  std::size_t size() const { return items.size(); }
  ItemIndex target() const { return items.back(); }
  std::vector<ItemIndex> history() const {
    return {items.begin(), items.end() - 1};
  }

  bool operator==(const InteractionSequence&) const = default;
};

// A (history, target) pair fed to the trainer or evaluator.
struct Sample {
  std::size_t user = 0;  // index into the owning corpus
  std::vector<ItemIndex> history;
  ItemIndex target = 0;

  bool operator==(const Sample&) const = default;
};

}  // namespace card
