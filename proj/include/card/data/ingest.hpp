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
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "card/data/corpus_io.hpp"

namespace card::data {

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

struct IngestOptions {
  int min_interactions = 5;  // per user and per item
  int min_length = 3;
};

struct IngestResult {
  std::vector<InteractionSequence> sequences;  // users sorted by id
  Vocabulary vocab;                            // items sorted by id
  std::size_t raw_interactions = 0;
  std::size_t filter_passes = 0;
  std::size_t dropped_short = 0;
};

inline std::vector<RawInteraction> ReadInteractions(const std::filesystem::path& path) {
  auto in = OpenForRead(path);
  std::vector<RawInteraction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (line.empty()) continue;
    const auto fields = SplitString(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3) throw DataError(where + ": expected 3 tab-separated columns");
    if (fields[0].empty() || fields[1].empty()) throw DataError(where + ": empty identifier");
    RawInteraction row{fields[0], fields[1], 0};
    try {
      std::size_t used = 0;
      row.timestamp = std::stoll(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      throw DataError(where + ": bad timestamp '" + fields[2] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Removes users and items with fewer than `min_count` interactions until no
// further removal happens.
inline std::vector<RawInteraction> FilterToCore(std::vector<RawInteraction> rows, int min_count,
                                                std::size_t* passes = nullptr) {
  std::size_t pass = 0;
  while (true) {
    ++pass;
    std::unordered_map<std::string, int> user_count, item_count;
    for (const auto& r : rows) {
      ++user_count[r.user_id];
      ++item_count[r.item_id];
    }
    std::vector<RawInteraction> kept;
    kept.reserve(rows.size());
    for (auto& r : rows) {
      if (user_count[r.user_id] >= min_count && item_count[r.item_id] >= min_count) {
        kept.push_back(std::move(r));
      }
    }
    const bool changed = kept.size() != rows.size();
    rows = std::move(kept);
    if (!changed) break;
  }
  if (passes) *passes = pass;
  return rows;
}

inline IngestResult IngestInteractions(std::vector<RawInteraction> rows,
                                       const IngestOptions& options = {}) {
  IngestResult result;
  result.raw_interactions = rows.size();
  rows = FilterToCore(std::move(rows), options.min_interactions, &result.filter_passes);

  // File order is preserved within a user so equal timestamps keep it.
  std::map<std::string, std::vector<const RawInteraction*>> by_user;
  for (const auto& r : rows) by_user[r.user_id].push_back(&r);
  for (auto it = by_user.begin(); it != by_user.end();) {
    if (static_cast<int>(it->second.size()) < options.min_length) {
      ++result.dropped_short;
      it = by_user.erase(it);
    } else {
      ++it;
    }
  }
  if (by_user.empty()) throw DataError("no sequences left after filtering");

  std::map<std::string, ItemIndex> index;
  for (const auto& [user, list] : by_user) {
    for (const auto* r : list) index.emplace(r->item_id, 0);
  }
  ItemIndex next = 0;
  for (auto& [item, idx] : index) {
    idx = next++;
    result.vocab.push_back(item);
  }
  for (auto& [user, list] : by_user) {
    std::stable_sort(list.begin(), list.end(), [](const RawInteraction* a, const RawInteraction* b) {
      return a->timestamp < b->timestamp;
    });
    InteractionSequence seq;
    seq.user_id = user;
    for (const auto* r : list) seq.items.push_back(index.at(r->item_id));
    result.sequences.push_back(std::move(seq));
  }
  return result;
}

inline IngestResult Ingest(const std::filesystem::path& path, const IngestOptions& options = {}) {
  return IngestInteractions(ReadInteractions(path), options);
}

}  // namespace card::data
