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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "card/core/types.hpp"

namespace card {

// Parameters of the Thompson-sampling redundancy remover.
struct DtsParams {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  double max_removal_frac = 0.3;
  int min_history = 2;
  double kappa = 10.0;  // pseudo-counts per unit of continuity evidence

  bool operator==(const DtsParams&) const = default;
};

struct ModelConfig {
  // Model shape.
  int d = 64;
  int max_history_len = 50;
  int encoder_layers = 2;
  int encoder_heads = 2;
  double encoder_dropout = 0.1;
  int denoiser_hidden = 256;
  double init_std = 0.1;

  // Routing and counterfactual attention.
  double lambda_stb = 1.0;
  int W = 3;
  double T = 1.0;
  double lambda_aux = 0.1;
  int per_candidates = 0;  // 0 = every position; m > 0 = m lowest-continuity positions
  bool freeze_routing_embeddings = false;
  std::string variant = "full";  // full | no_routing | no_attention
  DtsParams dts;

  // Diffusion.
  int tau_S = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double guidance_strength = 1.0;
  double cond_dropout_p = 0.1;
  bool detach_target = true;  // diffusion regression target is a constant

  // Optimization.
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 200;
  int patience = 20;
  int eval_every = 5;
  int val_users = 0;  // 0 = all users
  double grad_clip = 5.0;

  // Evaluation.
  int neg_samples = 100;
  int K = 20;
  std::string score = "dot";  // dot | cosine
  bool full_ranking = false;

  std::uint64_t seed = 1;

  bool operator==(const ModelConfig&) const = default;
};

// Calls visit(key, field) for every configurable field. The key is also the
// CLI flag name.
template <class Config, class Visitor>
void ForEachField(Config& c, Visitor&& visit) {
  visit("d", c.d);
  visit("max_history_len", c.max_history_len);
  visit("encoder_layers", c.encoder_layers);
  visit("encoder_heads", c.encoder_heads);
  visit("encoder_dropout", c.encoder_dropout);
  visit("denoiser_hidden", c.denoiser_hidden);
  visit("init_std", c.init_std);
  visit("lambda_stb", c.lambda_stb);
  visit("W", c.W);
  visit("T", c.T);
  visit("lambda_aux", c.lambda_aux);
  visit("per_candidates", c.per_candidates);
  visit("freeze_routing_embeddings", c.freeze_routing_embeddings);
  visit("variant", c.variant);
  visit("dts_alpha0", c.dts.alpha0);
  visit("dts_beta0", c.dts.beta0);
  visit("dts_max_removal_frac", c.dts.max_removal_frac);
  visit("dts_min_history", c.dts.min_history);
  visit("dts_kappa", c.dts.kappa);
  visit("tau_S", c.tau_S);
  visit("beta_start", c.beta_start);
  visit("beta_end", c.beta_end);
  visit("guidance_strength", c.guidance_strength);
  visit("cond_dropout_p", c.cond_dropout_p);
  visit("detach_target", c.detach_target);
  visit("lr", c.lr);
  visit("batch_size", c.batch_size);
  visit("epochs", c.epochs);
  visit("patience", c.patience);
  visit("eval_every", c.eval_every);
  visit("val_users", c.val_users);
  visit("grad_clip", c.grad_clip);
  visit("neg_samples", c.neg_samples);
  visit("K", c.K);
  visit("score", c.score);
  visit("full_ranking", c.full_ranking);
  visit("seed", c.seed);
}

namespace config_detail {

template <class T>
void ParseInto(const std::string& key, const std::string& text, T& out) {
  if constexpr (std::is_same_v<T, std::string>) {
    out = text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") {
      out = true;
    } else if (text == "false" || text == "0") {
      out = false;
    } else {
      throw ConfigError(key + ": expected a boolean, got '" + text + "'");
    }
  } else {
    // Integers must parse fully; reals go through strtod for exponents.
    if constexpr (std::is_integral_v<T>) {
      T value{};
      const auto* end = text.data() + text.size();
      auto [ptr, ec] = std::from_chars(text.data(), end, value);
      if (ec != std::errc() || ptr != end) {
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
      }
      out = value;
    } else {
      char* end = nullptr;
      const double value = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size()) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
      }
      out = value;
    }
  }
}

template <class T>
void FromJson(const std::string& key, const nlohmann::json& j, T& out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError("");
      out = j.get<T>();
    } else {
      out = j.get<T>();
    }
  } catch (const std::exception&) {
    throw ConfigError(key + ": wrong value type " + j.dump());
  }
}

inline void Require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace config_detail

// Structural checks the model needs to run at all.
inline void ValidateStructure(const ModelConfig& c) {
  using config_detail::Require;
  Require(c.d >= 1, "d must be >= 1");
  Require(c.max_history_len >= 2, "max_history_len must be >= 2");
  Require(c.encoder_layers >= 1, "encoder_layers must be >= 1");
  Require(c.encoder_heads >= 1 && c.d % c.encoder_heads == 0,
          "encoder_heads must divide d");
  Require(c.encoder_dropout >= 0.0 && c.encoder_dropout < 1.0,
          "encoder_dropout must be in [0,1)");
  Require(c.denoiser_hidden >= 1, "denoiser_hidden must be >= 1");
  Require(c.init_std > 0.0, "init_std must be > 0");
  Require(c.lambda_stb >= 0.0, "lambda_stb must be >= 0");
  Require(c.W >= 1, "W must be >= 1");
  Require(c.T > 0.0, "T must be > 0");
  Require(c.lambda_aux >= 0.0, "lambda_aux must be >= 0");
  Require(c.per_candidates >= 0, "per_candidates must be >= 0");
  Require(c.variant == "full" || c.variant == "no_routing" ||
              c.variant == "no_attention",
          "variant must be one of full, no_routing, no_attention");
  Require(c.dts.alpha0 > 0.0, "dts_alpha0 must be > 0");
  Require(c.dts.beta0 > 0.0, "dts_beta0 must be > 0");
  Require(c.dts.max_removal_frac >= 0.0 && c.dts.max_removal_frac < 1.0,
          "dts_max_removal_frac must be in [0,1)");
  Require(c.dts.min_history >= 2, "dts_min_history must be >= 2");
  Require(c.dts.kappa > 0.0, "dts_kappa must be > 0");
  Require(c.tau_S >= 1, "tau_S must be >= 1");
  Require(c.beta_start > 0.0 && c.beta_end < 1.0 && c.beta_start <= c.beta_end,
          "beta schedule must satisfy 0 < beta_start <= beta_end < 1");
  Require(c.guidance_strength >= 0.0, "guidance_strength must be >= 0");
  Require(c.cond_dropout_p >= 0.0 && c.cond_dropout_p <= 1.0,
          "cond_dropout_p must be in [0,1]");
  Require(c.lr > 0.0, "lr must be > 0");
  Require(c.batch_size >= 1, "batch_size must be >= 1");
  Require(c.epochs >= 1, "epochs must be >= 1");
  Require(c.patience >= 1, "patience must be >= 1");
  Require(c.eval_every >= 1, "eval_every must be >= 1");
  Require(c.val_users >= 0, "val_users must be >= 0");
  Require(c.grad_clip >= 0.0, "grad_clip must be >= 0");
  Require(c.neg_samples >= 1, "neg_samples must be >= 1");
  Require(c.K >= 1, "K must be >= 1");
  Require(c.score == "dot" || c.score == "cosine", "score must be dot or cosine");
}

// Full check applied to user-supplied configuration: structure plus the
// tuning ranges of the routing hyperparameters.
inline void ValidateConfig(const ModelConfig& c) {
  using config_detail::Require;
  Require(c.lambda_stb >= 0.5 && c.lambda_stb <= 2.0,
          "lambda_stb must be in [0.5, 2.0]");
  Require(c.W == 1 || c.W == 3 || c.W == 5, "W must be in {1,3,5}");
  ValidateStructure(c);
}

inline nlohmann::ordered_json ToJson(const ModelConfig& config) {
  nlohmann::ordered_json j;
  ModelConfig copy = config;
  ForEachField(copy, [&](const char* key, auto& field) { j[key] = field; });
  return j;
}

// Applies the keys present in `j`; unknown keys are errors.
inline void ApplyJson(const nlohmann::json& j, ModelConfig& config) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    ForEachField(config, [&](const char* name, auto& field) {
      if (key == name) {
        config_detail::FromJson(key, value, field);
        found = true;
      }
    });
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

inline void ApplyOverrides(const std::map<std::string, std::string>& overrides,
                           ModelConfig& config) {
  for (const auto& [key, text] : overrides) {
    bool found = false;
    ForEachField(config, [&](const char* name, auto& field) {
      if (key == name) {
        config_detail::ParseInto(key, text, field);
        found = true;
      }
    });
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

inline ModelConfig ParseConfig(const std::string& text,
                               const std::map<std::string, std::string>& overrides = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  ModelConfig config;
  ApplyJson(j, config);
  ApplyOverrides(overrides, config);
  ValidateConfig(config);
  return config;
}

// Reads a JSON object of config keys; CLI overrides win over file values.
inline ModelConfig LoadConfig(const std::string& path,
                              const std::map<std::string, std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseConfig(buffer.str(), overrides);
}

inline std::string SerializeConfig(const ModelConfig& config) {
  return ToJson(config).dump(2);
}

}  // namespace card
