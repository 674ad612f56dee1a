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
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "card/core/rng.hpp"
#include "card/core/types.hpp"

namespace card::data {

// Per-position ground truth of synthetic sequences.
enum class PositionLabel : char { kRegular = 'r', kBridge = 'b', kNoise = 'n' };

using Vocabulary = std::vector<std::string>;  // index -> original item id

inline std::vector<std::string> SplitString(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  std::istringstream in(text);
  while (std::getline(in, current, sep)) parts.push_back(current);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

inline std::ifstream OpenForRead(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream OpenForWrite(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

inline void StripCarriageReturn(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

// Corpus format: one line per user, `user_id<TAB>idx1,idx2,...`.
inline void WriteCorpus(const std::filesystem::path& path,
                        const std::vector<InteractionSequence>& sequences) {
  auto out = OpenForWrite(path);
  for (const auto& seq : sequences) {
    out << seq.user_id << '\t';
    for (std::size_t i = 0; i < seq.items.size(); ++i) {
      if (i) out << ',';
      out << seq.items[i];
    }
    out << '\n';
  }
}

inline std::vector<InteractionSequence> ReadCorpus(const std::filesystem::path& path) {
  auto in = OpenForRead(path);
  std::vector<InteractionSequence> sequences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (line.empty()) continue;
    const auto fields = SplitString(line, '\t');
    if (fields.size() != 2 || fields[0].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected user<TAB>items");
    }
    InteractionSequence seq;
    seq.user_id = fields[0];
    for (const auto& token : SplitString(fields[1], ',')) {
      try {
        std::size_t used = 0;
        const long value = std::stol(token, &used);
        if (used != token.size() || value < 0) throw std::invalid_argument(token);
        seq.items.push_back(static_cast<ItemIndex>(value));
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad item index '" +
                        token + "'");
      }
    }
    sequences.push_back(std::move(seq));
  }
  return sequences;
}

// Vocabulary format: `item_id<TAB>index`, one line per item, index ascending.
inline void WriteVocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = OpenForWrite(path);
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab[i] << '\t' << i << '\n';
}

inline Vocabulary ReadVocabulary(const std::filesystem::path& path) {
  auto in = OpenForRead(path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (line.empty()) continue;
    const auto fields = SplitString(line, '\t');
    if (fields.size() != 2 || fields[1] != std::to_string(vocab.size())) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected item_id<TAB>" + std::to_string(vocab.size()));
    }
    vocab.push_back(fields[0]);
  }
  return vocab;
}

inline std::uint64_t VocabularyHash(const Vocabulary& vocab) {
  std::uint64_t hash = Fnv1a64("");
  for (const auto& item : vocab) {
    hash = Fnv1a64(item, hash);
    hash = Fnv1a64("\n", hash);
  }
  return hash;
}

// Labels sidecar: `user_id<TAB>r,b,n,...` aligned with the corpus items.
inline void WriteLabels(const std::filesystem::path& path,
                        const std::vector<InteractionSequence>& sequences,
                        const std::vector<std::vector<PositionLabel>>& labels) {
  auto out = OpenForWrite(path);
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    out << sequences[u].user_id << '\t';
    for (std::size_t i = 0; i < labels[u].size(); ++i) {
      if (i) out << ',';
      out << static_cast<char>(labels[u][i]);
    }
    out << '\n';
  }
}

inline std::vector<std::vector<PositionLabel>> ReadLabels(const std::filesystem::path& path) {
  auto in = OpenForRead(path);
  std::vector<std::vector<PositionLabel>> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (line.empty()) continue;
    const auto fields = SplitString(line, '\t');
    if (fields.size() != 2) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected user<TAB>labels");
    }
    std::vector<PositionLabel> row;
    for (const auto& token : SplitString(fields[1], ',')) {
      if (token != "r" && token != "b" && token != "n") {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + token +
                        "'");
      }
      row.push_back(static_cast<PositionLabel>(token[0]));
    }
    labels.push_back(std::move(row));
  }
  return labels;
}

// Writes sequences back as raw `user<TAB>item<TAB>timestamp` interactions, using
// the position as the timestamp.
inline void WriteInteractions(const std::filesystem::path& path,
                              const std::vector<InteractionSequence>& sequences,
                              const Vocabulary& vocab) {
  auto out = OpenForWrite(path);
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.items.size(); ++i) {
      out << seq.user_id << '\t' << vocab.at(static_cast<std::size_t>(seq.items[i])) << '\t' << i
          << '\n';
    }
  }
}

}  // namespace card::data
