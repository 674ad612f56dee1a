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
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "card/core/rng.hpp"
#include "card/core/types.hpp"
#include "card/model.hpp"

namespace card {

struct RankingResult {
  std::size_t user = 0;
  int rank = 0;  // 1-based among the candidates
  int hit = 0;
  double ndcg = 0.0;
};

inline RankingResult MakeRankingResult(std::size_t user, int rank, int K) {
  RankingResult r;
  r.user = user;
  r.rank = rank;
  r.hit = rank <= K ? 1 : 0;
  r.ndcg = r.hit ? 1.0 / std::log2(rank + 1.0) : 0.0;
  return r;
}

// Rank of the target when every candidate scoring >= the target precedes it.
inline int PessimisticRank(double target_score, const std::vector<double>& other_scores) {
  int rank = 1;
  for (double s : other_scores) {
    if (s >= target_score) ++rank;
  }
  return rank;
}

enum class ScoreMode { kDot, kCosine };

inline ScoreMode ParseScoreMode(const std::string& name) {
  return name == "cosine" ? ScoreMode::kCosine : ScoreMode::kDot;
}

inline std::vector<double> ScoreCandidates(const RowVector& generated,
                                           const std::vector<ItemIndex>& candidates,
                                           const Matrix& table, ScoreMode mode = ScoreMode::kDot) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  const double gnorm = generated.norm();
  for (ItemIndex item : candidates) {
    const auto row = table.row(ItemRow(item));
    double s = row.dot(generated);
    if (mode == ScoreMode::kCosine) {
      const double denom = gnorm * row.norm();
      s = denom > 0.0 ? s / denom : 0.0;
    }
    scores.push_back(s);
  }
  return scores;
}

// Uniform sample without replacement from [0, n_items) minus `excluded`.
inline std::vector<ItemIndex> SampleNegatives(int n_items, const std::unordered_set<ItemIndex>& excluded,
                                              int count, Rng& rng) {
  const int pool = n_items - static_cast<int>(excluded.size());
  if (pool < count) {
    throw DataError("item universe too small: need " + std::to_string(count) +
                    " negatives but only " + std::to_string(pool) + " items are eligible");
  }
  std::vector<ItemIndex> eligible;
  eligible.reserve(static_cast<std::size_t>(pool));
  for (ItemIndex i = 0; i < n_items; ++i) {
    if (!excluded.count(i)) eligible.push_back(i);
  }
  // Partial Fisher-Yates.
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.UniformInt(i, pool - 1));
    std::swap(eligible[static_cast<std::size_t>(i)], eligible[j]);
  }
  eligible.resize(static_cast<std::size_t>(count));
  return eligible;
}

// Leave-one-out ranking of one held-out target against sampled negatives
// (or every other item when full_ranking is set).
inline RankingResult EvaluateUser(const Sample& sample, const CardModel& model, int neg_samples,
                                  int K, Rng& rng) {
  std::unordered_set<ItemIndex> excluded(sample.history.begin(), sample.history.end());
  excluded.insert(sample.target);
  std::vector<ItemIndex> negatives;
  if (model.config().full_ranking) {
    for (ItemIndex i = 0; i < model.n_items(); ++i) {
      if (i != sample.target) negatives.push_back(i);
    }
  } else {
    negatives = SampleNegatives(model.n_items(), excluded, neg_samples, rng);
  }
  Rng sample_rng = rng.Derive("sample");
  const RowVector generated = model.Generate(sample.history, sample_rng);
  const ScoreMode mode = ParseScoreMode(model.config().score);
  const Matrix& table = model.table().value();
  const double target_score = ScoreCandidates(generated, {sample.target}, table, mode).front();
  const auto neg_scores = ScoreCandidates(generated, negatives, table, mode);
  return MakeRankingResult(sample.user, PessimisticRank(target_score, neg_scores), K);
}

struct EvaluationRun {
  double hr = 0.0;
  double ndcg = 0.0;
  std::vector<RankingResult> users;
  double seconds = 0.0;
};

// Evaluates every sample; per-user streams derive from (seed, "eval", index).
inline EvaluationRun EvaluateSamples(const std::vector<Sample>& samples, const CardModel& model,
                                     std::uint64_t seed, std::size_t limit = 0) {
  const auto start = std::chrono::steady_clock::now();
  EvaluationRun run;
  const std::size_t n = limit == 0 ? samples.size() : std::min(limit, samples.size());
  const Rng base = SeededRng(seed, "eval");
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = base.Derive(i);
    run.users.push_back(EvaluateUser(samples[i], model, model.config().neg_samples,
                                     model.config().K, rng));
  }
  for (const auto& r : run.users) {
    run.hr += r.hit;
    run.ndcg += r.ndcg;
  }
  if (n > 0) {
    run.hr /= static_cast<double>(n);
    run.ndcg /= static_cast<double>(n);
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  std::vector<double> per_seed;
};

// Aggregates per-seed values (already in the reporting unit).
inline MetricSummary Aggregate(const std::vector<double>& per_seed) {
  MetricSummary s;
  s.per_seed = per_seed;
  if (per_seed.empty()) return s;
  s.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / per_seed.size();
  if (per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (per_seed.size() - 1.0));
  }
  return s;
}

inline double Round2(double v) { return std::round(v * 100.0) / 100.0; }

struct MetricsReport {
  int K = 20;
  MetricSummary hr;    // percent
  MetricSummary ndcg;  // percent
  std::vector<std::uint64_t> seeds;
  std::vector<double> seconds;

  nlohmann::ordered_json ToJson() const {
    auto summary = [](const MetricSummary& m) {
      nlohmann::ordered_json j;
      j["mean"] = Round2(m.mean);
      j["std"] = Round2(m.std);
      std::vector<double> rounded;
      for (double v : m.per_seed) rounded.push_back(Round2(v));
      j["per_seed"] = rounded;
      return j;
    };
    nlohmann::ordered_json j;
    j["HR@" + std::to_string(K)] = summary(hr);
    j["NDCG@" + std::to_string(K)] = summary(ndcg);
    j["seeds"] = seeds;
    j["eval_seconds"] = seconds;
    return j;
  }

  // "5.78±0.04" style cell.
  static std::string Cell(const MetricSummary& m) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << m.mean << "±" << m.std;
    return out.str();
  }
};

// Folds per-seed runs (fractions) into a percent report.
inline MetricsReport BuildReport(const std::vector<EvaluationRun>& runs,
                                 const std::vector<std::uint64_t>& seeds, int K) {
  MetricsReport report;
  report.K = K;
  report.seeds = seeds;
  std::vector<double> hr, ndcg;
  for (const auto& r : runs) {
    hr.push_back(100.0 * r.hr);
    ndcg.push_back(100.0 * r.ndcg);
    report.seconds.push_back(r.seconds);
  }
  report.hr = Aggregate(hr);
  report.ndcg = Aggregate(ndcg);
  return report;
}

}  // namespace card
