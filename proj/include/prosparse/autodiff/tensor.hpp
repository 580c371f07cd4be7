// Copyright 2026 The prosparse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "prosparse/error.hpp"

namespace prosparse::ad {

/// One value in the computation graph. Results of differentiable ops keep
/// their parents and a closure that pushes `grad` into the parents' grads.
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Long recurrent graphs would otherwise release parents recursively.
  ~Node() {
    std::vector<std::shared_ptr<Node>> pending = std::move(parents);
    while (!pending.empty()) {
      std::shared_ptr<Node> n = std::move(pending.back());
      pending.pop_back();
      if (n.use_count() == 1) {
        for (auto& p : n->parents) pending.push_back(std::move(p));
        n->parents.clear();
      }
    }
  }
};

inline std::uint64_t next_node_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

/// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad = false) {
    if (values.size() != rows * cols)
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(rows, cols));
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(rows * cols, 0.0);
    n->seq = next_node_seq();
    return Tensor(std::move(n));
  }

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    std::size_t n = values.size();
    return from(n, 1, std::move(values), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from(1, 1, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::string shape() const { return shape_str(rows(), cols()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  std::span<double> grads() { return node_->grad; }
  std::span<const double> grads() const { return node_->grad; }

  double operator[](std::size_t i) const { return node_->value[i]; }
  double operator()(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape());
    return node_->value[0];
  }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  /// Reverse-mode pass from this scalar. Gradients accumulate into every
  /// reachable leaf that requires them; intermediate grads are cleared
  /// after use so the graph can be reused.
  void backward(double seed = 1.0) const {
    if (size() != 1) throw ShapeError("backward() needs a scalar, got " + shape());
    if (!node_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
      Node* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (const auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
      }
    }
    // Parents are always created before their children.
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });
    node_->grad[0] += seed;
    for (Node* n : order) {
      if (!n->backward) continue;
      n->backward(*n);
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. The backward closure is kept only when recording is
/// on and some parent needs gradients.
inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          std::initializer_list<const Tensor*> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->seq = next_node_seq();
  bool needs = false;
  if (grad_enabled())
    for (const Tensor* p : parents) needs = needs || p->requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->grad.assign(rows * cols, 0.0);
    for (const Tensor* p : parents) n->parents.push_back(p->ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                          const std::vector<Tensor>& parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->seq = next_node_seq();
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->grad.assign(rows * cols, 0.0);
    for (const auto& p : parents) n->parents.push_back(p.ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

/// Parent `k` of `self`, or nullptr when it takes no gradient.
inline Node* grad_parent(Node& self, std::size_t k) {
  Node* p = self.parents[k].get();
  return p->requires_grad ? p : nullptr;
}

}  // namespace prosparse::ad
