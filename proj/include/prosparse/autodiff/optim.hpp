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

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prosparse/autodiff/tensor.hpp"
#include "prosparse/error.hpp"

namespace prosparse::ad {

/// Named learnable tensors in registration order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, Tensor::zeros(rows, cols, true));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(entries_.size());
    for (const auto& [name, t] : entries_) out.emplace_back(t.values().begin(), t.values().end());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != entries_.size()) throw std::invalid_argument("parameter snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto dst = entries_[i].second.values();
      if (values[i].size() != dst.size()) throw std::invalid_argument("snapshot shape mismatch for " + entries_[i].first);
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const ParameterStore& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& [name, t] : params.entries()) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

/// One bias-corrected Adam update from the accumulated gradients. With
/// `clip_norm` > 0 the global gradient norm is first rescaled to at most
/// that value.
inline void adam_step(ParameterStore& params, AdamState& state, double clip_norm = 0.0) {
  if (!(state.lr > 0)) throw std::invalid_argument("adam: learning rate must be positive");
  const auto& entries = params.entries();
  if (state.m.size() != entries.size()) throw ShapeError("adam: state does not match parameters");
  double sq = 0.0;
  for (const auto& [name, t] : entries)
    for (double g : t.grads()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + name);
      sq += g * g;
    }
  double factor = 1.0;
  if (clip_norm > 0 && std::sqrt(sq) > clip_norm) factor = clip_norm / std::sqrt(sq);

  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor p = entries[k].second;
    auto val = p.values();
    auto grad = p.grads();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != val.size()) throw ShapeError("adam: state shape mismatch for " + entries[k].first);
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = grad[i] * factor;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      val[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace prosparse::ad
