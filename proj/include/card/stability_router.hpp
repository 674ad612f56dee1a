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
#include <iostream>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace card {

enum class Verdict { kHighStability, kLowStability };

inline std::string_view VerdictName(Verdict v) {
  return v == Verdict::kHighStability ? "HighStability" : "LowStability";
}

struct StabilityReport {
  std::vector<double> con;
  double s_k = 0.0;
  Verdict verdict = Verdict::kHighStability;
};

// Cosine similarity; a zero-norm operand yields 0.
inline double CosineOrZero(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                           const Eigen::Ref<const Eigen::RowVectorXd>& b,
                           bool* degenerate = nullptr) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

// Softmax over adjacent-pair cosine similarities of the history rows.
// Returns one entry per adjacent pair (rows - 1 entries).
inline std::vector<double> ComputeContinuity(const Eigen::MatrixXd& history,
                                             int* zero_norm_pairs = nullptr) {
  const Eigen::Index pairs = history.rows() - 1;
  if (pairs < 1) throw std::invalid_argument("continuity needs at least two items");
  std::vector<double> sims(static_cast<std::size_t>(pairs));
  int degenerate_count = 0;
  for (Eigen::Index n = 0; n < pairs; ++n) {
    bool degenerate = false;
    sims[n] = CosineOrZero(history.row(n), history.row(n + 1), &degenerate);
    if (degenerate) ++degenerate_count;
  }
  if (degenerate_count > 0) {
    std::clog << "warning: " << degenerate_count
              << " zero-norm embedding pair(s) in continuity; cosine taken as 0\n";
  }
  if (zero_norm_pairs) *zero_norm_pairs = degenerate_count;
  const double max_sim = *std::max_element(sims.begin(), sims.end());
  double total = 0.0;
  for (double& s : sims) {
    s = std::exp(s - max_sim);
    total += s;
  }
  for (double& s : sims) s /= total;
  return sims;
}

// Shannon entropy in nats; 0 ln 0 is taken as 0.
inline double StabilityScore(std::span<const double> con) {
  double h = 0.0;
  for (double c : con) {
    if (c > 0.0) h -= c * std::log(c);
  }
  return std::max(h, 0.0);
}

inline Verdict Route(double s_k, double lambda_stb) {
  return s_k <= lambda_stb ? Verdict::kHighStability : Verdict::kLowStability;
}

inline StabilityReport AssessStability(const Eigen::MatrixXd& history, double lambda_stb) {
  StabilityReport report;
  report.con = ComputeContinuity(history);
  report.s_k = StabilityScore(report.con);
  report.verdict = Route(report.s_k, lambda_stb);
  return report;
}

}  // namespace card
