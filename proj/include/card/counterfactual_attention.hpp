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
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "card/ad/ops.hpp"
#include "card/ad/optim.hpp"

namespace card {

using ad::Matrix;
using ad::RowVector;
using ad::Tensor;
using ad::Vector;

// Counterfactual record for one history position (1-based).
struct PerRecord {
  int position = 0;
  double loss_without = 0.0;
  double loss_with = 0.0;
  double per = 0.0;
  double weight = 1.0;
};

struct WeightedSequence {
  Matrix embeddings;  // already multiplied by weights
  Vector weights;
  std::vector<PerRecord> records;
};

// Two-layer MLP predicting the mean embedding of the upcoming window.
class AuxPredictor {
 public:
  AuxPredictor() = default;
  AuxPredictor(ad::ParameterStore& store, int d, Rng& rng) {
    const double std1 = 1.0 / std::sqrt(static_cast<double>(d));
    w1_ = store.AddNormal("aux.w1", d, d, std1, rng);
    b1_ = store.Add("aux.b1", Matrix::Zero(1, d));
    w2_ = store.AddNormal("aux.w2", d, d, std1, rng);
    b2_ = store.Add("aux.b2", Matrix::Zero(1, d));
  }

  Tensor Forward(const Tensor& hidden) const {
    return ad::Linear(ad::Gelu(ad::Linear(hidden, w1_, b1_)), w2_, b2_);
  }

  RowVector Predict(const RowVector& hidden) const {
    ad::NoGradGuard guard;
    return Forward(ad::Constant(Matrix(hidden))).value().row(0);
  }

 private:
  Tensor w1_, b1_, w2_, b2_;
};

// Mean of history rows n+1 .. min(n+W, L) for 1-based position n; empty when
// n is the last position.
inline std::optional<RowVector> FutureWindowTarget(const Matrix& history, int n, int W) {
  const int length = static_cast<int>(history.rows());
  if (n < 1 || n > length) throw std::out_of_range("future window position out of range");
  const int last = std::min(n + W, length);
  if (last <= n) return std::nullopt;
  // Rows n .. last-1 in 0-based indexing.
  return history.middleRows(n, last - n).colwise().mean();
}

// Loss without item n minus loss with it, from already-computed predictions.
inline double PerFromPredictions(const RowVector& pred_prev, const RowVector& pred_curr,
                                 const RowVector& target) {
  return (pred_prev - target).squaredNorm() - (pred_curr - target).squaredNorm();
}

template <class AuxFn>
double ComputePer(const RowVector& h_prev, const RowVector& h_curr, const RowVector& target,
                  AuxFn&& aux) {
  return PerFromPredictions(aux(h_prev), aux(h_curr), target);
}

inline double PerToWeight(double per, double T) { return 1.0 + std::tanh(per / T); }

// Positions (1-based) eligible for counterfactual scoring. With m > 0 only the
// m positions whose incoming pair has the lowest continuity are kept.
inline std::vector<int> CandidatePositions(int length, const std::vector<double>& con, int m) {
  std::vector<int> positions;
  if (m <= 0) {
    positions.resize(length);
    std::iota(positions.begin(), positions.end(), 1);
    return positions;
  }
  // Position n (>= 2) is entered through pair n-1, i.e. con[n-2].
  for (int n = 2; n <= length; ++n) positions.push_back(n);
  std::stable_sort(positions.begin(), positions.end(),
                   [&](int a, int b) { return con[a - 2] < con[b - 2]; });
  if (static_cast<int>(positions.size()) > m) positions.resize(m);
  std::sort(positions.begin(), positions.end());
  return positions;
}

// Re-weights history rows by 1 + tanh(PER/T). `predictions` holds the aux
// predictor output for hidden states h_0..h_L (L+1 rows, h_0 = empty prefix).
// Positions without a future window, or outside `candidates`, keep weight 1.
inline WeightedSequence ReweightFromPredictions(const Matrix& history, const Matrix& predictions,
                                                int W, double T,
                                                const std::vector<int>* candidates = nullptr) {
  const int length = static_cast<int>(history.rows());
  if (predictions.rows() != length + 1) {
    throw std::invalid_argument("predictions must cover h_0..h_L");
  }
  WeightedSequence out;
  out.weights = Vector::Ones(length);
  std::vector<bool> eligible(static_cast<std::size_t>(length) + 1, candidates == nullptr);
  if (candidates) {
    for (int n : *candidates) eligible[n] = true;
  }
  for (int n = 1; n <= length; ++n) {
    if (!eligible[n]) continue;
    auto target = FutureWindowTarget(history, n, W);
    if (!target) continue;
    PerRecord r;
    r.position = n;
    r.loss_without = (predictions.row(n - 1) - *target).squaredNorm();
    r.loss_with = (predictions.row(n) - *target).squaredNorm();
    r.per = r.loss_without - r.loss_with;
    r.weight = PerToWeight(r.per, T);
    out.weights(n - 1) = r.weight;
    out.records.push_back(r);
  }
  out.embeddings = out.weights.asDiagonal() * history;
  return out;
}

// Same with a caller-supplied predictor over hidden states (rows h_0..h_L).
template <class AuxFn>
WeightedSequence ReweightSequence(const Matrix& history, const Matrix& hidden, AuxFn&& aux, int W,
                                  double T) {
  Matrix predictions(hidden.rows(), history.cols());
  for (Eigen::Index i = 0; i < hidden.rows(); ++i) {
    predictions.row(i) = aux(RowVector(hidden.row(i)));
  }
  return ReweightFromPredictions(history, predictions, W, T);
}

// Stacked future-window targets for positions 1..L-1 ((L-1) x d).
inline Matrix FutureWindowTargets(const Matrix& history, int W) {
  const int length = static_cast<int>(history.rows());
  Matrix targets(std::max(length - 1, 0), history.cols());
  for (int n = 1; n < length; ++n) targets.row(n - 1) = *FutureWindowTarget(history, n, W);
  return targets;
}

// Mean over positions with a future window of ||aux(h_n) - target_n||^2.
// `predictions` are aux outputs for h_0..h_L; targets are treated as constants.
inline Tensor AuxLossFromPredictions(const Tensor& predictions, const Matrix& history, int W) {
  const int length = static_cast<int>(history.rows());
  if (length < 2) throw std::invalid_argument("aux loss needs a position with a future window");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(length - 1));
  std::iota(rows.begin(), rows.end(), 1);
  Tensor diff = ad::Sub(ad::Rows(predictions, rows), ad::Constant(FutureWindowTargets(history, W)));
  return ad::Scale(ad::Sum(ad::RowSquaredNorms(diff)), 1.0 / static_cast<double>(length - 1));
}

inline Tensor AuxLoss(const Tensor& hidden, const Matrix& history, const AuxPredictor& aux,
                      int W) {
  return AuxLossFromPredictions(aux.Forward(hidden), history, W);
}

}  // namespace card
