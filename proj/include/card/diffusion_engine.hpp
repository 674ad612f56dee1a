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
#include <stdexcept>
#include <string>
#include <vector>

#include "card/ad/ops.hpp"
#include "card/ad/optim.hpp"
#include "card/core/rng.hpp"

namespace card {

using ad::Matrix;
using ad::RowVector;
using ad::Tensor;

// Linear beta schedule; index t runs over 1..tau_S with alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule Linear(int tau_S, double beta_start, double beta_end) {
    std::vector<double> betas(static_cast<std::size_t>(tau_S));
    for (int i = 0; i < tau_S; ++i) {
      betas[i] = tau_S == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * i / (tau_S - 1.0);
    }
    return NoiseSchedule(std::move(betas));
  }

  explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    alpha_bars_.assign(betas_.size() + 1, 1.0);
    for (std::size_t i = 0; i < betas_.size(); ++i) {
      if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) {
        throw std::invalid_argument("betas must lie in (0,1)");
      }
      alpha_bars_[i + 1] = alpha_bars_[i] * (1.0 - betas_[i]);
    }
  }

  int steps() const { return static_cast<int>(betas_.size()); }
  double Beta(int t) const { return betas_.at(static_cast<std::size_t>(t - 1)); }
  double Alpha(int t) const { return 1.0 - Beta(t); }
  double AlphaBar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t)); }

  void CheckStep(int t) const {
    if (t < 1 || t > steps()) {
      throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " +
                              std::to_string(steps()) + "]");
    }
  }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

struct NoisedSample {
  RowVector noised;
  RowVector eps;
};

inline RowVector StandardNormal(Eigen::Index dim, Rng& rng) {
  RowVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.Normal();
  return v;
}

inline NoisedSample ForwardNoise(const RowVector& e0, int t, const NoiseSchedule& schedule,
                                 Rng& rng) {
  schedule.CheckStep(t);
  RowVector eps = StandardNormal(e0.size(), rng);
  const double ab = schedule.AlphaBar(t);
  return {std::sqrt(ab) * e0 + std::sqrt(1.0 - ab) * eps, eps};
}

// Differentiable in e0.
inline Tensor ForwardNoise(const Tensor& e0, int t, const RowVector& eps,
                           const NoiseSchedule& schedule) {
  schedule.CheckStep(t);
  const double ab = schedule.AlphaBar(t);
  return ad::Add(ad::Scale(e0, std::sqrt(ab)), ad::Constant(Matrix(std::sqrt(1.0 - ab) * eps)));
}

// Sinusoidal embedding of the diffusion step.
inline RowVector StepEmbedding(int t, int dim) {
  RowVector out(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
    out(i) = std::sin(t * freq);
    out(half + i) = std::cos(t * freq);
  }
  if (dim % 2 == 1) out(dim - 1) = 0.0;
  return out;
}

// x0-parameterized denoiser: three dense layers over [noised, guidance, step].
class Denoiser {
 public:
  Denoiser() = default;

  Denoiser(ad::ParameterStore& store, int d, int hidden, Rng& rng) : d_(d) {
    const int in = 3 * d;
    w1_ = store.AddNormal("denoiser.w1", in, hidden, 1.0 / std::sqrt(in), rng);
    b1_ = store.Add("denoiser.b1", Matrix::Zero(1, hidden));
    w2_ = store.AddNormal("denoiser.w2", hidden, hidden, 1.0 / std::sqrt(hidden), rng);
    b2_ = store.Add("denoiser.b2", Matrix::Zero(1, hidden));
    w3_ = store.AddNormal("denoiser.w3", hidden, d, 1.0 / std::sqrt(hidden), rng);
    b3_ = store.Add("denoiser.b3", Matrix::Zero(1, d));
  }

  Tensor operator()(const Tensor& noised, const Tensor& guidance, int t) const {
    Tensor input = ad::ConcatCols({noised, guidance, ad::Constant(StepEmbedding(t, d_))});
    Tensor h = ad::Silu(ad::Linear(input, w1_, b1_));
    h = ad::Silu(ad::Linear(h, w2_, b2_));
    return ad::Linear(h, w3_, b3_);
  }

  RowVector Predict(const RowVector& noised, const RowVector& guidance, int t) const {
    ad::NoGradGuard guard;
    return (*this)(ad::Constant(noised), ad::Constant(guidance), t).value().row(0);
  }

 private:
  int d_ = 0;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

// (1 + w) f_cond - w f_uncond.
template <class Derived>
auto CfgCombine(const Eigen::MatrixBase<Derived>& f_cond, const Eigen::MatrixBase<Derived>& f_uncond,
                typename Derived::Scalar w) {
  using Scalar = typename Derived::Scalar;
  return ((Scalar(1) + w) * f_cond - w * f_uncond).eval();
}

inline double CfgCombine(double f_cond, double f_uncond, double w) {
  return (1.0 + w) * f_cond - w * f_uncond;
}

// One diffusion training term ||e0 - f(noised, g, t)||^2 with fixed step and noise.
template <class DenoiserFn>
Tensor DiffusionLossTerm(const Tensor& e0, const Tensor& guidance, int t, const RowVector& eps,
                         const NoiseSchedule& schedule, const DenoiserFn& denoiser) {
  Tensor noised = ForwardNoise(e0, t, eps, schedule);
  return ad::SumSquares(ad::Sub(e0, denoiser(noised, guidance, t)));
}

struct DiffusionExample {
  Tensor e0;
  Tensor guidance;
};

struct DiffusionDraws {
  int null_substitutions = 0;
};

// Mean over the batch of the x0 regression error, with t ~ U{1..tau_S} and the
// guidance replaced by `null_guidance` with probability cond_dropout_p.
template <class DenoiserFn>
Tensor DiffusionLoss(const std::vector<DiffusionExample>& batch, const NoiseSchedule& schedule,
                     const DenoiserFn& denoiser, const Tensor& null_guidance, double cond_dropout_p,
                     Rng& rng, DiffusionDraws* draws = nullptr) {
  if (batch.empty()) throw std::invalid_argument("diffusion loss needs a non-empty batch");
  Tensor total;
  for (const auto& example : batch) {
    const int t = static_cast<int>(rng.UniformInt(1, schedule.steps()));
    RowVector eps = StandardNormal(example.e0.cols(), rng);
    const bool drop = cond_dropout_p > 0.0 && rng.Uniform() < cond_dropout_p;
    if (drop && draws) ++draws->null_substitutions;
    Tensor term = DiffusionLossTerm(example.e0, drop ? null_guidance : example.guidance, t, eps,
                                    schedule, denoiser);
    total = total.defined() ? ad::Add(total, term) : term;
  }
  return ad::Scale(total, 1.0 / static_cast<double>(batch.size()));
}

// Ancestral sampling with classifier-free guidance on the x0 estimate.
template <class PredictFn>
RowVector GuidedSampleWith(const PredictFn& predict, const RowVector& guidance,
                           const RowVector& null_guidance, const NoiseSchedule& schedule,
                           double w, Rng& rng) {
  RowVector x = StandardNormal(guidance.size(), rng);
  for (int t = schedule.steps(); t >= 1; --t) {
    RowVector x0 = predict(x, guidance, t);
    if (w != 0.0) x0 = CfgCombine(x0, predict(x, null_guidance, t), w);
    if (t == 1) {
      // alpha_bar(0) = 1: the posterior collapses onto the x0 estimate.
      x = x0;
      break;
    }
    const double ab = schedule.AlphaBar(t);
    const double ab_prev = schedule.AlphaBar(t - 1);
    const double beta = schedule.Beta(t);
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(schedule.Alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
    x = c0 * x0 + ct * x + std::sqrt(var) * StandardNormal(x.size(), rng);
  }
  return x;
}

inline RowVector GuidedSample(const Denoiser& denoiser, const RowVector& guidance,
                              const RowVector& null_guidance, const NoiseSchedule& schedule,
                              double w, Rng& rng) {
  return GuidedSampleWith(
      [&](const RowVector& x, const RowVector& g, int t) { return denoiser.Predict(x, g, t); },
      guidance, null_guidance, schedule, w, rng);
}

}  // namespace card
