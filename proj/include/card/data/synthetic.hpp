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

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "card/core/rng.hpp"
#include "card/data/corpus_io.hpp"

namespace card::data {

struct SyntheticSpec {
  int n_users = 500;
  int n_items = 400;
  int n_clusters = 8;
  double shift_prob = 0.5;
  double noise_rate = 0.1;
  int min_length = 8;
  int max_length = 20;
  int latent_dim = 16;
  double cluster_separation = 3.0;  // norm of each cluster centre
  double item_spread = 1.0;         // norm scale of an item's offset from its centre
};

struct SyntheticCorpus {
  std::vector<InteractionSequence> sequences;
  std::vector<std::vector<PositionLabel>> labels;  // aligned with sequence items
  std::vector<std::optional<int>> bridge;          // 1-based bridge position
  std::vector<int> item_cluster;
  Eigen::MatrixXd latent;  // n_items x latent_dim
  Vocabulary vocab;
};

inline void ValidateSyntheticSpec(const SyntheticSpec& s) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(s.n_users >= 1, "n_users must be >= 1");
  require(s.n_clusters >= 1, "n_clusters must be >= 1");
  require(s.n_items >= s.n_clusters, "n_items must be >= n_clusters");
  require(s.shift_prob >= 0.0 && s.shift_prob <= 1.0, "shift_prob must be in [0,1]");
  require(s.noise_rate >= 0.0 && s.noise_rate <= 1.0, "noise_rate must be in [0,1]");
  require(s.min_length >= 4, "min_length must be >= 4");
  require(s.max_length >= s.min_length, "max_length must be >= min_length");
  require(s.latent_dim >= 1, "latent_dim must be >= 1");
  require(s.shift_prob == 0.0 || s.n_clusters >= 2, "shifts need at least two clusters");
}

// Cluster-structured sequences. Item i belongs to cluster i % n_clusters. A
// shifted sequence switches from cluster A to cluster B at the bridge position
// b in [2, N-2]: positions < b come from A, positions >= b from B. Afterwards
// each non-bridge position is replaced by a uniformly random item with
// probability noise_rate.
inline SyntheticCorpus GenerateSynthetic(const SyntheticSpec& spec, Rng& rng) {
  ValidateSyntheticSpec(spec);
  SyntheticCorpus corpus;
  const int dim = spec.latent_dim;
  Eigen::MatrixXd centres(spec.n_clusters, dim);
  for (int c = 0; c < spec.n_clusters; ++c) {
    for (int j = 0; j < dim; ++j) centres(c, j) = rng.Normal();
    centres.row(c) *= spec.cluster_separation / centres.row(c).norm();
  }
  corpus.latent.resize(spec.n_items, dim);
  corpus.item_cluster.resize(spec.n_items);
  std::vector<std::vector<ItemIndex>> members(spec.n_clusters);
  for (int i = 0; i < spec.n_items; ++i) {
    const int c = i % spec.n_clusters;
    corpus.item_cluster[i] = c;
    members[c].push_back(i);
    for (int j = 0; j < dim; ++j) {
      corpus.latent(i, j) = centres(c, j) + spec.item_spread * rng.Normal() / std::sqrt(dim);
    }
    corpus.vocab.push_back("item" + std::to_string(i));
  }
  auto draw_from = [&](int cluster) {
    const auto& pool = members[cluster];
    return pool[static_cast<std::size_t>(rng.UniformInt(0, static_cast<std::int64_t>(pool.size()) - 1))];
  };

  for (int u = 0; u < spec.n_users; ++u) {
    const int length = static_cast<int>(rng.UniformInt(spec.min_length, spec.max_length));
    const int first = static_cast<int>(rng.UniformInt(0, spec.n_clusters - 1));
    std::optional<int> bridge;
    int second = first;
    if (rng.Bernoulli(spec.shift_prob)) {
      second = static_cast<int>(rng.UniformInt(0, spec.n_clusters - 2));
      if (second >= first) ++second;
      bridge = static_cast<int>(rng.UniformInt(2, length - 2));
    }
    InteractionSequence seq;
    seq.user_id = "u" + std::to_string(u);
    std::vector<PositionLabel> labels(static_cast<std::size_t>(length), PositionLabel::kRegular);
    for (int pos = 1; pos <= length; ++pos) {
      const bool after = bridge && pos >= *bridge;
      seq.items.push_back(draw_from(after ? second : first));
    }
    if (bridge) labels[*bridge - 1] = PositionLabel::kBridge;
    for (int pos = 1; pos <= length; ++pos) {
      if (bridge && pos == *bridge) continue;
      if (spec.noise_rate > 0.0 && rng.Bernoulli(spec.noise_rate)) {
        seq.items[pos - 1] =
            static_cast<ItemIndex>(rng.UniformInt(0, static_cast<std::int64_t>(spec.n_items) - 1));
        labels[pos - 1] = PositionLabel::kNoise;
      }
    }
    corpus.sequences.push_back(std::move(seq));
    corpus.labels.push_back(std::move(labels));
    corpus.bridge.push_back(bridge);
  }
  return corpus;
}

}  // namespace card::data
