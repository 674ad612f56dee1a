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

#include <cassert>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace card::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// A value in the computation graph. Intermediate nodes die with the graph that
// produced them; parameter leaves live in the model and accumulate gradients
// across every graph that touches them until the optimizer consumes them.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  void Accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
  Matrix& GradRef() {
    if (grad.size() == 0) grad.setZero(value.rows(), value.cols());
    return grad;
  }
};

namespace detail {
inline bool& NoGradFlag() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

inline bool GradEnabled() { return !detail::NoGradFlag(); }

// Disables graph recording in scope; ops then only compute values.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::NoGradFlag()) { detail::NoGradFlag() = true; }
  ~NoGradGuard() { detail::NoGradFlag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const {
    assert(rows() == 1 && cols() == 1);
    return node_->value(0, 0);
  }
  const NodePtr& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

inline Tensor Constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

inline Tensor Constant(const RowVector& value) { return Constant(Matrix(value)); }

// Leaf that accumulates gradient.
inline Tensor Leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

// Builds a graph node from `value`. `backward` receives the node once its
// gradient is complete and is responsible for pushing into parents.
inline Tensor MakeNode(Matrix value, std::vector<Tensor> inputs,
                       std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (GradEnabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

// Accumulates d(root)/d(leaf) into every reachable leaf. Root must be 1x1.
inline void Backward(const Tensor& root) {
  assert(root.rows() == 1 && root.cols() == 1);
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->Accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

}  // namespace card::ad
