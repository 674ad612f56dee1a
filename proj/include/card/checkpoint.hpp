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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "card/core/config.hpp"
#include "card/model.hpp"

namespace card {

// Sidecar metadata stored next to the parameter blob as `<blob>.json`.
struct CheckpointInfo {
  ModelConfig config;
  int n_items = 0;
  std::uint64_t vocab_hash = 0;
  int epoch = 0;
  std::optional<double> val_hr;
  std::optional<double> val_ndcg;
  std::uint64_t seed = 0;
  std::string data_dir;  // corpus the model was trained on, informational

  nlohmann::ordered_json ToJson() const {
    nlohmann::ordered_json j;
    j["config"] = card::ToJson(config);
    j["n_items"] = n_items;
    j["vocab_hash"] = vocab_hash;
    j["epoch"] = epoch;
    j["val_hr"] = val_hr ? nlohmann::ordered_json(*val_hr) : nlohmann::ordered_json(nullptr);
    j["val_ndcg"] = val_ndcg ? nlohmann::ordered_json(*val_ndcg) : nlohmann::ordered_json(nullptr);
    j["seed"] = seed;
    j["data_dir"] = data_dir;
    return j;
  }

  static CheckpointInfo FromJson(const nlohmann::json& j) {
    try {
      CheckpointInfo info;
      ApplyJson(j.at("config"), info.config);
      ValidateStructure(info.config);
      info.n_items = j.at("n_items").get<int>();
      info.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
      info.epoch = j.at("epoch").get<int>();
      if (!j.at("val_hr").is_null()) info.val_hr = j.at("val_hr").get<double>();
      if (!j.at("val_ndcg").is_null()) info.val_ndcg = j.at("val_ndcg").get<double>();
      info.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("data_dir")) info.data_dir = j.at("data_dir").get<std::string>();
      return info;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("malformed checkpoint sidecar: ") + e.what());
    }
  }

  bool operator==(const CheckpointInfo&) const = default;
};

inline std::filesystem::path SidecarPath(const std::filesystem::path& blob) {
  return std::filesystem::path(blob.string() + ".json");
}

namespace checkpoint_detail {
inline constexpr char kMagic[8] = {'C', 'A', 'R', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

template <class T>
void WritePod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T ReadPod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}
}  // namespace checkpoint_detail

// Blob layout: magic, version, parameter count, then per parameter its name
// (u32 length + bytes), rows, cols (u32) and column-major float64 values.
inline void SaveCheckpoint(const std::filesystem::path& path, const CardModel& model,
                           const CheckpointInfo& info) {
  using namespace checkpoint_detail;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  WritePod(out, kVersion);
  const auto& entries = model.store().entries();
  WritePod(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    WritePod(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const Matrix& v = e.tensor.value();
    WritePod(out, static_cast<std::uint32_t>(v.rows()));
    WritePod(out, static_cast<std::uint32_t>(v.cols()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double) * v.size()));
  }
  std::ofstream side(SidecarPath(path));
  if (!side) throw CheckpointError("cannot write sidecar for '" + path.string() + "'");
  side << info.ToJson().dump(2) << '\n';
}

inline CheckpointInfo ReadCheckpointInfo(const std::filesystem::path& path) {
  std::ifstream side(SidecarPath(path));
  if (!side) throw CheckpointError("missing sidecar '" + SidecarPath(path).string() + "'");
  try {
    return CheckpointInfo::FromJson(nlohmann::json::parse(side));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("unparsable sidecar: ") + e.what());
  }
}

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::unique_ptr<CardModel> model;
};

// Rebuilds the model from the sidecar config and overwrites its parameters.
// A vocabulary hash that differs from `expected_vocab_hash` is an error.
// `overrides` may change inference-time keys; shape changes fail the layout check.
inline LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path,
                                       std::optional<std::uint64_t> expected_vocab_hash = {},
                                       const std::map<std::string, std::string>& overrides = {}) {
  using namespace checkpoint_detail;
  LoadedCheckpoint loaded;
  loaded.info = ReadCheckpointInfo(path);
  ApplyOverrides(overrides, loaded.info.config);
  ValidateStructure(loaded.info.config);
  if (expected_vocab_hash && *expected_vocab_hash != loaded.info.vocab_hash) {
    throw CheckpointError("vocabulary hash mismatch: checkpoint " +
                          std::to_string(loaded.info.vocab_hash) + " vs data " +
                          std::to_string(*expected_vocab_hash));
  }
  loaded.model = std::make_unique<CardModel>(loaded.info.config, loaded.info.n_items);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  }
  if (ReadPod<std::uint32_t>(in) != kVersion) throw CheckpointError("unsupported checkpoint version");
  auto& entries = loaded.model->store().entries();
  const auto count = ReadPod<std::uint32_t>(in);
  if (count != entries.size()) throw CheckpointError("parameter count mismatch");
  for (auto& e : entries) {
    const auto name_len = ReadPod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = ReadPod<std::uint32_t>(in);
    const auto cols = ReadPod<std::uint32_t>(in);
    Matrix& v = e.tensor.node()->value;
    if (name != e.name || rows != v.rows() || cols != v.cols()) {
      throw CheckpointError("parameter layout mismatch at '" + name + "'");
    }
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
    if (!in) throw CheckpointError("truncated checkpoint");
  }
  return loaded;
}

}  // namespace card
