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
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "card/ad/optim.hpp"
#include "card/evaluator.hpp"
#include "card/model.hpp"

namespace card {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepLosses {
  double diffusion = 0.0;  // batch mean
  double aux = 0.0;        // mean over counterfactual-path samples, 0 if none
  double total = 0.0;      // batch mean of diffusion + lambda_aux * aux
  std::size_t aux_samples = 0;
  std::size_t null_substitutions = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss_diffusion = 0.0;
  double loss_aux = 0.0;
  double loss_total = 0.0;
  RoutingCounters counters;
  std::optional<double> val_hr;
  std::optional<double> val_ndcg;
  double seconds = 0.0;  // wall clock; kept out of the deterministic log line

  // Deterministic JSON line (no timing).
  std::string ToJsonLine() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["loss_diffusion"] = loss_diffusion;
    j["loss_aux"] = loss_aux;
    j["loss_total"] = loss_total;
    j["per_passes"] = counters.per_passes;
    j["dts_calls"] = counters.dts_calls;
    j["identity"] = counters.identity;
    j["low_stability_fraction"] = counters.LowStabilityFraction();
    j["val_hr"] = val_hr ? nlohmann::ordered_json(*val_hr) : nlohmann::ordered_json(nullptr);
    j["val_ndcg"] = val_ndcg ? nlohmann::ordered_json(*val_ndcg) : nlohmann::ordered_json(nullptr);
    return j.dump();
  }
};

struct TrainState {
  int epoch = 0;
  std::size_t step = 0;
  RoutingCounters counters;  // cumulative over the run
};

struct FitResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_hr = -1.0;
};

class Trainer {
 public:
  Trainer(CardModel& model, const ModelConfig& config)
      : model_(model), config_(config), optimizer_(config.lr) {
    ValidateStructure(config_);
  }

  const TrainState& state() const { return state_; }

  // One optimizer update over `batch`. Each sample's loss is back-propagated
  // separately (scaled by 1/|batch|) so graphs stay small.
  StepLosses TrainStep(const std::vector<Sample>& batch, Rng& rng, RoutingCounters& counters) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    auto& store = model_.store();
    store.ZeroGrad();
    StepLosses losses;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const Tensor null_guidance_row = model_.NullGuidanceTensor();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Rng sample_rng = rng.Derive(i);
      GuidanceResult guidance = model_.TrainGuidance(batch[i].history, sample_rng, counters);
      DiffusionDraws draws;
      Tensor target = model_.Embed({batch[i].target});
      if (config_.detach_target) target = ad::Constant(target.value());
      Tensor diffusion = DiffusionLoss({{target, guidance.guidance}},
                                       model_.schedule(), model_.denoiser(), null_guidance_row,
                                       config_.cond_dropout_p, sample_rng, &draws);
      losses.null_substitutions += static_cast<std::size_t>(draws.null_substitutions);
      Tensor total = diffusion;
      losses.diffusion += diffusion.scalar();
      if (guidance.aux_loss.defined()) {
        losses.aux += guidance.aux_loss.scalar();
        ++losses.aux_samples;
        total = ad::Add(total, ad::Scale(guidance.aux_loss, config_.lambda_aux));
      }
      if (!std::isfinite(total.scalar())) {
        throw TrainingError(DescribeBatch(batch, i, total.scalar()));
      }
      losses.total += total.scalar();
      ad::Backward(ad::Scale(total, inv_batch));
    }
    losses.diffusion *= inv_batch;
    losses.total *= inv_batch;
    if (losses.aux_samples > 0) losses.aux /= static_cast<double>(losses.aux_samples);
    optimizer_.Step(store, config_.grad_clip);
    ++state_.step;
    return losses;
  }

  // One pass over `train` in a seed-determined order.
  EpochLog RunEpoch(const std::vector<Sample>& train) {
    const auto start = std::chrono::steady_clock::now();
    ++state_.epoch;
    EpochLog log;
    log.epoch = state_.epoch;
    const Rng epoch_rng = SeededRng(config_.seed, "train").Derive(static_cast<std::uint64_t>(state_.epoch));
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = epoch_rng.Derive("shuffle");
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double diffusion_sum = 0.0, aux_sum = 0.0, total_sum = 0.0;
    std::size_t aux_count = 0;
    const auto batch_size = static_cast<std::size_t>(config_.batch_size);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      std::vector<Sample> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train[order[i]]);
      Rng batch_rng = epoch_rng.Derive(batch_index);
      StepLosses losses = TrainStep(batch, batch_rng, log.counters);
      const double n = static_cast<double>(batch.size());
      diffusion_sum += losses.diffusion * n;
      total_sum += losses.total * n;
      aux_sum += losses.aux * static_cast<double>(losses.aux_samples);
      aux_count += losses.aux_samples;
    }
    const double n = std::max<std::size_t>(train.size(), 1);
    log.loss_diffusion = diffusion_sum / n;
    log.loss_total = total_sum / n;
    log.loss_aux = aux_count ? aux_sum / static_cast<double>(aux_count) : 0.0;
    state_.counters.sequences += log.counters.sequences;
    state_.counters.low_stability += log.counters.low_stability;
    state_.counters.per_passes += log.counters.per_passes;
    state_.counters.dts_calls += log.counters.dts_calls;
    state_.counters.identity += log.counters.identity;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return log;
  }

  // Trains for config.epochs with early stopping on validation HR@K, evaluated
  // every eval_every epochs. The best parameters are restored at the end.
  FitResult Fit(const std::vector<Sample>& train, const std::vector<Sample>& valid,
                const std::function<void(const EpochLog&)>& on_epoch = {}) {
    FitResult result;
    std::vector<Matrix> best;
    int evals_without_improvement = 0;
    for (int e = 0; e < config_.epochs; ++e) {
      EpochLog log = RunEpoch(train);
      const bool last = e + 1 == config_.epochs;
      if (!valid.empty() && (log.epoch % config_.eval_every == 0 || last)) {
        const auto eval_start = std::chrono::steady_clock::now();
        EvaluationRun run = EvaluateSamples(valid, model_, config_.seed,
                                            static_cast<std::size_t>(config_.val_users));
        log.val_hr = run.hr;
        log.val_ndcg = run.ndcg;
        log.seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - eval_start).count();
        if (run.hr > result.best_val_hr) {
          result.best_val_hr = run.hr;
          result.best_epoch = log.epoch;
          best = Snapshot();
          evals_without_improvement = 0;
        } else {
          evals_without_improvement += config_.eval_every;
        }
      }
      result.epochs.push_back(log);
      if (on_epoch) on_epoch(log);
      if (evals_without_improvement >= config_.patience) break;
    }
    if (!best.empty()) Restore(best);
    if (result.best_epoch == 0 && !result.epochs.empty()) result.best_epoch = result.epochs.back().epoch;
    return result;
  }

  std::vector<Matrix> Snapshot() const {
    std::vector<Matrix> values;
    for (const auto& p : model_.store().entries()) values.push_back(p.tensor.value());
    return values;
  }

  void Restore(const std::vector<Matrix>& values) {
    auto& entries = model_.store().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].tensor.node()->value = values[i];
  }

 private:
  std::string DescribeBatch(const std::vector<Sample>& batch, std::size_t offending, double loss) const {
    std::ostringstream out;
    out << "non-finite loss " << loss << " at epoch " << state_.epoch << " step " << state_.step
        << "; offending sample " << offending << " (user " << batch[offending].user << ")\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out << "  sample " << i << " user=" << batch[i].user << " target=" << batch[i].target
          << " history=";
      for (std::size_t k = 0; k < batch[i].history.size(); ++k) {
        out << (k ? "," : "") << batch[i].history[k];
      }
      out << '\n';
    }
    return out.str();
  }

  CardModel& model_;
  ModelConfig config_;
  ad::Adam optimizer_;
  TrainState state_;
};

}  // namespace card
