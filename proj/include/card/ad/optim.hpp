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
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "card/ad/tensor.hpp"
#include "card/core/rng.hpp"

namespace card::ad {

// Named collection of trainable leaves. Registration order is stable and
// defines the checkpoint layout.
class ParameterStore {
 public:
  Tensor Add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
    index_[name] = params_.size();
    params_.push_back({name, Leaf(std::move(init))});
    return params_.back().tensor;
  }

  Tensor AddNormal(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                   double std, Rng& rng) {
    Matrix init(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) init(i, j) = std * rng.Normal();
    }
    return Add(name, std::move(init));
  }

  struct Entry {
    std::string name;
    Tensor tensor;
  };

  const std::vector<Entry>& entries() const { return params_; }
  std::vector<Entry>& entries() { return params_; }

  Tensor Get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return params_[it->second].tensor;
  }

  void ZeroGrad() {
    for (auto& p : params_) p.tensor.node()->ZeroGrad();
  }

  std::size_t NumScalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.value().size());
    return n;
  }

 private:
  std::vector<Entry> params_;
  std::map<std::string, std::size_t> index_;
};

// Adam with optional global-norm gradient clipping.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void Step(ParameterStore& store, double clip_norm = 0.0) {
    if (m_.empty()) {
      for (const auto& p : store.entries()) {
        m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
        v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      }
    }
    double scale = 1.0;
    if (clip_norm > 0.0) {
      double total = 0.0;
      for (const auto& p : store.entries()) {
        if (p.tensor.grad().size() != 0) total += p.tensor.grad().squaredNorm();
      }
      const double norm = std::sqrt(total);
      if (norm > clip_norm) scale = clip_norm / norm;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto& entries = store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Node& node = *entries[i].tensor.node();
      if (node.grad.size() == 0) continue;
      const Matrix g = node.grad * scale;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
      node.value.array() -=
          lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace card::ad
