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

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "card/data/split.hpp"
#include "card/evaluator.hpp"
#include "card/trainer.hpp"

namespace card {

struct AblationRun {
  std::uint64_t seed = 0;
  EvaluationRun test;
  FitResult fit;
  RoutingCounters counters;
  double train_seconds = 0.0;
  double mean_epoch_seconds = 0.0;
};

struct AblationReport {
  std::string variant;
  MetricsReport metrics;
  std::vector<AblationRun> runs;

  nlohmann::ordered_json ToJson() const {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["metrics"] = metrics.ToJson();
    nlohmann::ordered_json runs_json = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
      nlohmann::ordered_json rj;
      rj["seed"] = r.seed;
      rj["best_epoch"] = r.fit.best_epoch;
      rj["epochs_run"] = r.fit.epochs.size();
      rj["per_passes"] = r.counters.per_passes;
      rj["dts_calls"] = r.counters.dts_calls;
      rj["identity"] = r.counters.identity;
      rj["sequences"] = r.counters.sequences;
      rj["train_seconds"] = r.train_seconds;
      rj["mean_epoch_seconds"] = r.mean_epoch_seconds;
      rj["test_eval_seconds"] = r.test.seconds;
      runs_json.push_back(rj);
    }
    j["runs"] = runs_json;
    return j;
  }
};

inline bool IsVariant(const std::string& v) {
  return v == "full" || v == "no_routing" || v == "no_attention";
}

// Trains and tests one variant per seed on the leave-one-out split of
// `sequences`: full routes per stability, no_routing sends everything to the
// counterfactual path, no_attention sends everything to DTS.
inline AblationReport RunAblation(const std::string& variant, const ModelConfig& base,
                                  const std::vector<InteractionSequence>& sequences, int n_items,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::function<void(std::uint64_t, const EpochLog&)>& on_epoch = {}) {
  if (!IsVariant(variant)) throw ConfigError("unknown ablation variant '" + variant + "'");
  const auto split = data::SplitLeaveOneOut(sequences, static_cast<std::size_t>(base.dts.min_history));
  AblationReport report;
  report.variant = variant;
  std::vector<EvaluationRun> tests;
  for (std::uint64_t seed : seeds) {
    ModelConfig config = base;
    config.variant = variant;
    config.seed = seed;
    CardModel model(config, n_items);
    Trainer trainer(model, config);
    const auto start = std::chrono::steady_clock::now();
    AblationRun run;
    run.seed = seed;
    run.fit = trainer.Fit(split.train, split.valid, [&](const EpochLog& log) {
      if (on_epoch) on_epoch(seed, log);
    });
    run.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double epoch_seconds = 0.0;
    for (const auto& e : run.fit.epochs) epoch_seconds += e.seconds;
    run.mean_epoch_seconds = run.fit.epochs.empty() ? 0.0 : epoch_seconds / run.fit.epochs.size();
    run.counters = trainer.state().counters;
    run.test = EvaluateSamples(split.test, model, seed);
    tests.push_back(run.test);
    report.runs.push_back(std::move(run));
  }
  report.metrics = BuildReport(tests, seeds, base.K);
  return report;
}

}  // namespace card
