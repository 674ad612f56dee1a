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
#include <span>
#include <vector>

#include "card/ad/tensor.hpp"

namespace card::ad {

inline Tensor MatMul(const Tensor& a, const Tensor& b) {
  return MakeNode(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.Accumulate(self.grad * b.value.transpose());
    if (b.requires_grad) b.Accumulate(a.value.transpose() * self.grad);
  });
}

inline Tensor Add(const Tensor& a, const Tensor& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return MakeNode(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->Accumulate(self.grad);
    }
  });
}

inline Tensor Sub(const Tensor& a, const Tensor& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return MakeNode(a.value() - b.value(), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.Accumulate(self.grad);
    if (b.requires_grad) b.Accumulate(-self.grad);
  });
}

// Element-wise product.
inline Tensor Mul(const Tensor& a, const Tensor& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return MakeNode(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.Accumulate(self.grad.cwiseProduct(b.value));
    if (b.requires_grad) b.Accumulate(self.grad.cwiseProduct(a.value));
  });
}

// a (n x c) + row (1 x c) broadcast over rows.
inline Tensor AddRow(const Tensor& a, const Tensor& row) {
  assert(row.rows() == 1 && row.cols() == a.cols());
  Matrix out = a.value().rowwise() + row.value().row(0);
  return MakeNode(std::move(out), {a, row}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& row = *self.parents[1];
    if (a.requires_grad) a.Accumulate(self.grad);
    if (row.requires_grad) row.Accumulate(self.grad.colwise().sum());
  });
}

inline Tensor Scale(const Tensor& a, double s) {
  return MakeNode(a.value() * s, {a}, [s](Node& self) {
    self.parents[0]->Accumulate(self.grad * s);
  });
}

// Multiplies row i by the constant weights[i]. No gradient flows to weights.
inline Tensor ScaleRows(const Tensor& a, const Vector& weights) {
  assert(weights.size() == a.rows());
  Matrix out = weights.asDiagonal() * a.value();
  return MakeNode(std::move(out), {a}, [weights](Node& self) {
    self.parents[0]->Accumulate(weights.asDiagonal() * self.grad);
  });
}

inline Tensor Transpose(const Tensor& a) {
  return MakeNode(a.value().transpose(), {a}, [](Node& self) {
    self.parents[0]->Accumulate(self.grad.transpose());
  });
}

inline Tensor Tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return MakeNode(out, {a}, [out](Node& self) {
    self.parents[0]->Accumulate(
        (self.grad.array() * (1.0 - out.array().square())).matrix());
  });
}

// Tanh approximation of GELU.
inline Tensor Gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  const auto& x = a.value().array();
  Eigen::ArrayXXd inner = kC * (x + 0.044715 * x.cube());
  Eigen::ArrayXXd t = inner.tanh();
  Matrix out = (0.5 * x * (1.0 + t)).matrix();
  Eigen::ArrayXXd deriv =
      0.5 * (1.0 + t) +
      0.5 * x * (1.0 - t.square()) * kC * (1.0 + 3.0 * 0.044715 * x.square());
  return MakeNode(std::move(out), {a}, [deriv = std::move(deriv)](Node& self) {
    self.parents[0]->Accumulate((self.grad.array() * deriv).matrix());
  });
}

inline Tensor Silu(const Tensor& a) {
  const auto& x = a.value().array();
  Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x).exp());
  Matrix out = (x * sig).matrix();
  Eigen::ArrayXXd deriv = sig * (1.0 + x * (1.0 - sig));
  return MakeNode(std::move(out), {a}, [deriv = std::move(deriv)](Node& self) {
    self.parents[0]->Accumulate((self.grad.array() * deriv).matrix());
  });
}

// Row-wise layer normalization with learned gain and bias (1 x c each).
inline Tensor LayerNorm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                        double eps = 1e-5) {
  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  Vector mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  Vector inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps)
          .rsqrt()
          .matrix();
  Matrix xhat = inv_std.asDiagonal() * centered;
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return MakeNode(std::move(out), {a, gain, bias},
                  [xhat = std::move(xhat), inv_std = std::move(inv_std), n](Node& self) {
                    Node& a = *self.parents[0];
                    Node& gain = *self.parents[1];
                    Node& bias = *self.parents[2];
                    const Matrix& g = self.grad;
                    if (gain.requires_grad) {
                      gain.Accumulate(g.cwiseProduct(xhat).colwise().sum());
                    }
                    if (bias.requires_grad) bias.Accumulate(g.colwise().sum());
                    if (a.requires_grad) {
                      Matrix dxhat =
                          (g.array().rowwise() * gain.value.row(0).array()).matrix();
                      Vector mean_dxhat = dxhat.rowwise().mean();
                      Vector mean_dxhat_xhat =
                          dxhat.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(n);
                      Matrix dx = dxhat;
                      dx.colwise() -= mean_dxhat;
                      dx -= mean_dxhat_xhat.asDiagonal() * xhat;
                      a.Accumulate(inv_std.asDiagonal() * dx);
                    }
                  });
}

// Row-wise softmax restricted to entries where `allowed` is true. Disallowed
// entries are exactly zero. Every row must allow at least one entry.
inline Tensor MaskedSoftmaxRows(const Tensor& a,
                                const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& allowed) {
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double max_value = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (allowed(i, j)) max_value = std::max(max_value, x(i, j));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (allowed(i, j)) {
        out(i, j) = std::exp(x(i, j) - max_value);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return MakeNode(out, {a}, [out](Node& self) {
    Vector dot = self.grad.cwiseProduct(out).rowwise().sum();
    Matrix dx = self.grad;
    dx.colwise() -= dot;
    self.parents[0]->Accumulate(dx.cwiseProduct(out));
  });
}

inline Tensor SliceCols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  Matrix out = a.value().middleCols(start, count);
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  return MakeNode(std::move(out), {a}, [start, count, rows, cols](Node& self) {
    Matrix g = Matrix::Zero(rows, cols);
    g.middleCols(start, count) = self.grad;
    self.parents[0]->Accumulate(g);
  });
}

inline Tensor ConcatCols(const std::vector<Tensor>& parts) {
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Matrix out(rows, cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    assert(p.rows() == rows);
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    widths.push_back(p.cols());
  }
  return MakeNode(std::move(out), parts, [widths](Node& self) {
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (self.parents[i]->requires_grad) {
        self.parents[i]->Accumulate(self.grad.middleCols(offset, widths[i]));
      }
      offset += widths[i];
    }
  });
}

inline Tensor ConcatRows(const std::vector<Tensor>& parts) {
  Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Matrix out(rows, cols);
  std::vector<Eigen::Index> heights;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    assert(p.cols() == cols);
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
    heights.push_back(p.rows());
  }
  return MakeNode(std::move(out), parts, [heights](Node& self) {
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < heights.size(); ++i) {
      if (self.parents[i]->requires_grad) {
        self.parents[i]->Accumulate(self.grad.middleRows(offset, heights[i]));
      }
      offset += heights[i];
    }
  });
}

// Selects rows by index (repeats allowed); gradients scatter-add back.
inline Tensor Rows(const Tensor& a, std::vector<Eigen::Index> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) out.row(i) = a.value().row(index[i]);
  return MakeNode(std::move(out), {a}, [index = std::move(index)](Node& self) {
    Node& a = *self.parents[0];
    Matrix& g = a.GradRef();
    for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += self.grad.row(i);
  });
}

inline Tensor Row(const Tensor& a, Eigen::Index i) { return Rows(a, {i}); }

inline Tensor SumSquares(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return MakeNode(std::move(out), {a}, [](Node& self) {
    Node& a = *self.parents[0];
    a.Accumulate(a.value * (2.0 * self.grad(0, 0)));
  });
}

// Squared L2 norm of each row, as an (n x 1) column.
inline Tensor RowSquaredNorms(const Tensor& a) {
  Matrix out = a.value().rowwise().squaredNorm();
  return MakeNode(std::move(out), {a}, [](Node& self) {
    Node& a = *self.parents[0];
    a.Accumulate(2.0 * (self.grad.col(0).asDiagonal() * a.value));
  });
}

inline Tensor Sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  return MakeNode(std::move(out), {a}, [rows, cols](Node& self) {
    self.parents[0]->Accumulate(Matrix::Constant(rows, cols, self.grad(0, 0)));
  });
}

inline Tensor Mean(const Tensor& a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// Inverted dropout with a caller-supplied keep mask.
inline Tensor Dropout(const Tensor& a, const Eigen::ArrayXXd& keep, double p) {
  if (p <= 0.0) return a;
  Eigen::ArrayXXd factor = keep / (1.0 - p);
  Matrix out = (a.value().array() * factor).matrix();
  return MakeNode(std::move(out), {a}, [factor = std::move(factor)](Node& self) {
    self.parents[0]->Accumulate((self.grad.array() * factor).matrix());
  });
}

// x W + b
inline Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return AddRow(MatMul(x, weight), bias);
}

}  // namespace card::ad
