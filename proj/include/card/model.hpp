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
#include <string>
#include <vector>

#include "card/ad/ops.hpp"
#include "card/ad/optim.hpp"
#include "card/core/config.hpp"
#include "card/core/rng.hpp"
#include "card/core/types.hpp"
#include "card/counterfactual_attention.hpp"
#include "card/diffusion_engine.hpp"
#include "card/dts_simplifier.hpp"
#include "card/sequence_encoder.hpp"
#include "card/stability_router.hpp"

namespace card {

enum class GuidancePath { kDts, kCounterfactual, kIdentity, kPlain };

inline std::string_view PathName(GuidancePath p) {
  switch (p) {
    case GuidancePath::kDts: return "dts";
    case GuidancePath::kCounterfactual: return "counterfactual";
    case GuidancePath::kIdentity: return "identity";
    case GuidancePath::kPlain: return "plain";
  }
  return "?";
}

struct RoutingCounters {
  std::size_t sequences = 0;
  std::size_t low_stability = 0;  // router verdicts, whatever the variant
  std::size_t per_passes = 0;
  std::size_t dts_calls = 0;
  std::size_t identity = 0;

  double LowStabilityFraction() const {
    return sequences == 0 ? 0.0 : static_cast<double>(low_stability) / sequences;
  }
};

struct GuidanceResult {
  Tensor guidance;  // 1 x d
  Tensor aux_loss;  // undefined unless the counterfactual path ran in training
  GuidancePath path = GuidancePath::kPlain;
  StabilityReport report;
  std::vector<int> kept;  // DTS survivors (0-based history positions)
  WeightedSequence weighted;
};

// All trainable state: item table (with PAD and null-guidance rows), causal
// encoder, auxiliary future-window predictor and the denoiser.
class CardModel {
 public:
  CardModel(const ModelConfig& config, int n_items) : config_(config), n_items_(n_items) {
    ValidateStructure(config_);
    if (n_items < 1) throw ConfigError("model needs at least one item");
    Rng rng = SeededRng(config.seed, "init");
    Matrix table(n_items + kNumSpecialRows, config.d);
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      for (Eigen::Index i = 0; i < table.rows(); ++i) table(i, j) = config.init_std * rng.Normal();
    }
    table.row(kPadRow).setZero();
    table_ = store_.Add("item_embeddings", std::move(table));
    EncoderParams ep{config.d, config.encoder_layers, config.encoder_heads, config.encoder_dropout,
                     config.max_history_len};
    encoder_ = SequenceEncoder(store_, ep, rng);
    aux_ = AuxPredictor(store_, config.d, rng);
    denoiser_ = Denoiser(store_, config.d, config.denoiser_hidden, rng);
    schedule_ = NoiseSchedule::Linear(config.tau_S, config.beta_start, config.beta_end);
    if (config.freeze_routing_embeddings) frozen_table_ = table_.value();
  }

  CardModel(const CardModel&) = delete;
  CardModel& operator=(const CardModel&) = delete;
  CardModel(CardModel&&) = default;
  CardModel& operator=(CardModel&&) = default;

  const ModelConfig& config() const { return config_; }
  int n_items() const { return n_items_; }
  ad::ParameterStore& store() { return store_; }
  const ad::ParameterStore& store() const { return store_; }
  const Tensor& table() const { return table_; }
  const SequenceEncoder& encoder() const { return encoder_; }
  const AuxPredictor& aux() const { return aux_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  // Left-truncates to max_history_len.
  std::vector<ItemIndex> Clip(const std::vector<ItemIndex>& history) const {
    const auto max_len = static_cast<std::size_t>(config_.max_history_len);
    if (history.size() <= max_len) return history;
    return {history.end() - static_cast<std::ptrdiff_t>(max_len), history.end()};
  }

  std::vector<Eigen::Index> TableRows(const std::vector<ItemIndex>& items) const {
    std::vector<Eigen::Index> rows;
    rows.reserve(items.size());
    for (ItemIndex item : items) {
      if (item < 0 || item >= n_items_) {
        throw DataError("item index " + std::to_string(item) + " outside the embedding table");
      }
      rows.push_back(ItemRow(item));
    }
    return rows;
  }

  Tensor Embed(const std::vector<ItemIndex>& items) const { return ad::Rows(table_, TableRows(items)); }

  Matrix EmbeddingValues(const std::vector<ItemIndex>& items) const {
    const Matrix& source = config_.freeze_routing_embeddings ? frozen_table_ : table_.value();
    Matrix out(static_cast<Eigen::Index>(items.size()), config_.d);
    const auto rows = TableRows(items);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = source.row(rows[i]);
    return out;
  }

  RowVector ItemEmbedding(ItemIndex item) const { return table_.value().row(ItemRow(item)); }
  RowVector NullGuidance() const { return table_.value().row(kNullGuidanceRow); }
  Tensor NullGuidanceTensor() const { return ad::Row(table_, kNullGuidanceRow); }

  // Stability of a (clipped) history measured on the routing embeddings.
  StabilityReport Assess(const std::vector<ItemIndex>& history) const {
    return AssessStability(EmbeddingValues(history), config_.lambda_stb);
  }

  bool UsesCounterfactual(const StabilityReport& report) const {
    if (config_.variant == "no_routing") return true;
    if (config_.variant == "no_attention") return false;
    return report.verdict == Verdict::kLowStability;
  }

  // Training-time guidance: DTS removal for stable histories, counterfactual
  // re-weighting (plus the auxiliary loss) otherwise.
  GuidanceResult TrainGuidance(const std::vector<ItemIndex>& raw_history, Rng& rng,
                               RoutingCounters& counters) const {
    const auto history = Clip(raw_history);
    GuidanceResult out;
    out.report = Assess(history);
    ++counters.sequences;
    if (out.report.verdict == Verdict::kLowStability) ++counters.low_stability;
    if (UsesCounterfactual(out.report)) {
      ++counters.per_passes;
      out.path = GuidancePath::kCounterfactual;
      Tensor embedded = Embed(history);
      EncoderOutput base = encoder_.Encode(embedded, {}, &rng);
      Tensor predictions = aux_.Forward(base.hidden);
      const Matrix history_values = embedded.value();
      out.aux_loss = AuxLossFromPredictions(predictions, history_values, config_.W);
      out.weighted = Reweight(history_values, predictions.value(), out.report);
      out.guidance = encoder_.Encode(ad::ScaleRows(embedded, out.weighted.weights), {}, &rng).guidance;
      return out;
    }
    const int length = static_cast<int>(history.size());
    if (length <= config_.dts.min_history) {
      ++counters.identity;
      out.path = GuidancePath::kIdentity;
      for (int i = 0; i < length; ++i) out.kept.push_back(i);
      out.guidance = encoder_.Encode(Embed(history), {}, &rng).guidance;
      return out;
    }
    ++counters.dts_calls;
    out.path = GuidancePath::kDts;
    DtsResult dts = DtsSimplify(out.report.con, config_.dts, rng);
    out.kept = dts.kept;
    std::vector<ItemIndex> kept_items;
    for (int i : dts.kept) kept_items.push_back(history[i]);
    out.guidance = encoder_.Encode(Embed(kept_items), {}, &rng).guidance;
    return out;
  }

  // Inference-time guidance (no dropout, no graph). Counterfactual weights are
  // applied to low-stability histories; stable histories are encoded as is.
  GuidanceResult InferenceGuidance(const std::vector<ItemIndex>& raw_history) const {
    ad::NoGradGuard guard;
    const auto history = Clip(raw_history);
    GuidanceResult out;
    out.report = Assess(history);
    Tensor embedded = Embed(history);
    if (UsesCounterfactual(out.report)) {
      out.path = GuidancePath::kCounterfactual;
      out.weighted = CounterfactualWeights(embedded.value(), out.report);
      out.guidance = encoder_.Encode(ad::Constant(out.weighted.embeddings)).guidance;
    } else {
      out.path = GuidancePath::kPlain;
      out.guidance = encoder_.Encode(embedded).guidance;
    }
    return out;
  }

  // PER weights of a history under the current parameters (eval mode).
  WeightedSequence CounterfactualWeights(const Matrix& history_values,
                                         const StabilityReport& report) const {
    ad::NoGradGuard guard;
    EncoderOutput base = encoder_.Encode(ad::Constant(history_values));
    Matrix predictions = aux_.Forward(base.hidden).value();
    return Reweight(history_values, predictions, report);
  }

  WeightedSequence CounterfactualWeights(const std::vector<ItemIndex>& raw_history) const {
    const auto history = Clip(raw_history);
    Matrix values = [&] {
      ad::NoGradGuard guard;
      return Embed(history).value();
    }();
    return CounterfactualWeights(values, Assess(history));
  }

  RowVector Generate(const std::vector<ItemIndex>& history, Rng& rng) const {
    RowVector g = InferenceGuidance(history).guidance.value().row(0);
    return GuidedSample(denoiser_, g, NullGuidance(), schedule_, config_.guidance_strength, rng);
  }

 private:
  WeightedSequence Reweight(const Matrix& history_values, const Matrix& predictions,
                            const StabilityReport& report) const {
    if (config_.per_candidates > 0) {
      const auto candidates = CandidatePositions(static_cast<int>(history_values.rows()), report.con,
                                                 config_.per_candidates);
      return ReweightFromPredictions(history_values, predictions, config_.W, config_.T, &candidates);
    }
    return ReweightFromPredictions(history_values, predictions, config_.W, config_.T);
  }

  ModelConfig config_;
  int n_items_;
  ad::ParameterStore store_;
  Tensor table_;
  Matrix frozen_table_;
  SequenceEncoder encoder_;
  AuxPredictor aux_;
  Denoiser denoiser_;
  NoiseSchedule schedule_;
};

}  // namespace card
