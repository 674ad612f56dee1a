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
#include <string>
#include <vector>

#include "card/ad/ops.hpp"
#include "card/ad/optim.hpp"
#include "card/core/rng.hpp"

namespace card {

using ad::Matrix;
using ad::Tensor;

struct EncoderParams {
  int d = 64;
  int layers = 2;
  int heads = 2;
  double dropout = 0.1;
  int max_history_len = 50;
};

struct EncoderOutput {
  Tensor hidden;    // (L+1) x d; row 0 is the empty-prefix state h_0
  Tensor guidance;  // 1 x d; state at the last non-padding position
};

// Pre-norm causal transformer over [BOS; e_1 .. e_L]. Position n attends to
// positions <= n that are not padding. Inputs longer than max_history_len keep
// the most recent items.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;

  SequenceEncoder(ad::ParameterStore& store, const EncoderParams& params, Rng& rng)
      : params_(params) {
    const int d = params.d;
    const double std_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double std_ff = 1.0 / std::sqrt(4.0 * d);
    bos_ = store.AddNormal("encoder.bos", 1, d, 0.1, rng);
    positions_ = store.AddNormal("encoder.pos", params.max_history_len + 1, d, 0.1, rng);
    for (int l = 0; l < params.layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      Layer layer;
      layer.ln1_gain = store.Add(p + "ln1.gain", Matrix::Ones(1, d));
      layer.ln1_bias = store.Add(p + "ln1.bias", Matrix::Zero(1, d));
      layer.wq = store.AddNormal(p + "wq", d, d, std_d, rng);
      layer.bq = store.Add(p + "bq", Matrix::Zero(1, d));
      layer.wk = store.AddNormal(p + "wk", d, d, std_d, rng);
      layer.bk = store.Add(p + "bk", Matrix::Zero(1, d));
      layer.wv = store.AddNormal(p + "wv", d, d, std_d, rng);
      layer.bv = store.Add(p + "bv", Matrix::Zero(1, d));
      layer.wo = store.AddNormal(p + "wo", d, d, std_d, rng);
      layer.bo = store.Add(p + "bo", Matrix::Zero(1, d));
      layer.ln2_gain = store.Add(p + "ln2.gain", Matrix::Ones(1, d));
      layer.ln2_bias = store.Add(p + "ln2.bias", Matrix::Zero(1, d));
      layer.w1 = store.AddNormal(p + "w1", d, 4 * d, std_d, rng);
      layer.b1 = store.Add(p + "b1", Matrix::Zero(1, 4 * d));
      layer.w2 = store.AddNormal(p + "w2", 4 * d, d, std_ff, rng);
      layer.b2 = store.Add(p + "b2", Matrix::Zero(1, d));
      layers_.push_back(layer);
    }
    final_gain_ = store.Add("encoder.final.gain", Matrix::Ones(1, d));
    final_bias_ = store.Add("encoder.final.bias", Matrix::Zero(1, d));
  }

  const EncoderParams& params() const { return params_; }

  // `items` is L x d (already weighted or masked). `padding[i]` marks item i
  // as padding; padding must not precede every real item. `dropout_rng` is
  // null in eval mode.
  EncoderOutput Encode(Tensor items, std::vector<bool> padding = {},
                       Rng* dropout_rng = nullptr) const {
    Eigen::Index length = items.rows();
    if (padding.empty()) padding.assign(static_cast<std::size_t>(length), false);
    if (length > params_.max_history_len) {
      const Eigen::Index drop = length - params_.max_history_len;
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = drop; i < length; ++i) keep.push_back(i);
      items = ad::Rows(items, keep);
      padding.erase(padding.begin(), padding.begin() + drop);
      length = params_.max_history_len;
    }
    Eigen::Index last_real = -1;
    for (Eigen::Index i = 0; i < length; ++i) {
      if (!padding[i]) last_real = i;
    }
    if (last_real < 0) throw std::invalid_argument("encode needs at least one real item");

    const Eigen::Index steps = length + 1;
    std::vector<Eigen::Index> pos_rows(static_cast<std::size_t>(steps));
    for (Eigen::Index i = 0; i < steps; ++i) pos_rows[i] = i;
    Tensor x = ad::Add(ad::ConcatRows({bos_, items}), ad::Rows(positions_, pos_rows));
    x = MaybeDropout(x, dropout_rng);

    // allowed(i, j): query i may read key j.
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> allowed(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      for (Eigen::Index j = 0; j < steps; ++j) {
        allowed(i, j) = j <= i && (j == 0 || !padding[j - 1]);
      }
    }

    const int heads = params_.heads;
    const int head_dim = params_.d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (const Layer& layer : layers_) {
      Tensor normed = ad::LayerNorm(x, layer.ln1_gain, layer.ln1_bias);
      Tensor q = ad::Linear(normed, layer.wq, layer.bq);
      Tensor k = ad::Linear(normed, layer.wk, layer.bk);
      Tensor v = ad::Linear(normed, layer.wv, layer.bv);
      std::vector<Tensor> head_out;
      for (int h = 0; h < heads; ++h) {
        Tensor qh = ad::SliceCols(q, h * head_dim, head_dim);
        Tensor kh = ad::SliceCols(k, h * head_dim, head_dim);
        Tensor vh = ad::SliceCols(v, h * head_dim, head_dim);
        Tensor scores = ad::Scale(ad::MatMul(qh, ad::Transpose(kh)), inv_sqrt);
        Tensor attn = MaybeDropout(ad::MaskedSoftmaxRows(scores, allowed), dropout_rng);
        head_out.push_back(ad::MatMul(attn, vh));
      }
      Tensor merged = heads == 1 ? head_out.front() : ad::ConcatCols(head_out);
      x = ad::Add(x, MaybeDropout(ad::Linear(merged, layer.wo, layer.bo), dropout_rng));
      Tensor normed2 = ad::LayerNorm(x, layer.ln2_gain, layer.ln2_bias);
      Tensor ff = ad::Linear(ad::Gelu(ad::Linear(normed2, layer.w1, layer.b1)), layer.w2, layer.b2);
      x = ad::Add(x, MaybeDropout(ff, dropout_rng));
    }
    Tensor hidden = ad::LayerNorm(x, final_gain_, final_bias_);
    return {hidden, ad::Row(hidden, last_real + 1)};
  }

 private:
  struct Layer {
    Tensor ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  Tensor MaybeDropout(const Tensor& t, Rng* rng) const {
    if (rng == nullptr || params_.dropout <= 0.0) return t;
    Eigen::ArrayXXd keep(t.rows(), t.cols());
    for (Eigen::Index j = 0; j < keep.cols(); ++j) {
      for (Eigen::Index i = 0; i < keep.rows(); ++i) {
        keep(i, j) = rng->Uniform() >= params_.dropout ? 1.0 : 0.0;
      }
    }
    return ad::Dropout(t, keep, params_.dropout);
  }

  EncoderParams params_;
  Tensor bos_, positions_;
  std::vector<Layer> layers_;
  Tensor final_gain_, final_bias_;
};

}  // namespace card
