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

#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosparse/autodiff/ops.hpp"
#include "prosparse/autodiff/tensor.hpp"
#include "prosparse/error.hpp"

namespace prosparse::ad {

struct LstmWeights {
  Tensor w;  // [4H x (in + H)], gate blocks in order input, forget, output, candidate
  Tensor b;  // [4H x 1]
};

struct LstmState {
  Tensor h;
  Tensor c;
};

inline LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& p) {
  const std::size_t hidden = prev.h.rows();
  if (prev.c.rows() != hidden || p.w.rows() != 4 * hidden || p.w.cols() != x.rows() + hidden || x.cols() != 1)
    throw ShapeError("lstm_cell: x " + x.shape() + ", h " + prev.h.shape() + ", c " + prev.c.shape() + ", W " +
                     p.w.shape());
  Tensor z = affine(p.w, concat_rows({x, prev.h}), p.b);
  Tensor i = sigmoid(slice_rows(z, 0, hidden));
  Tensor f = sigmoid(slice_rows(z, hidden, hidden));
  Tensor o = sigmoid(slice_rows(z, 2 * hidden, hidden));
  Tensor g = tanh(slice_rows(z, 3 * hidden, hidden));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

/// Inverted dropout: survivors are scaled by 1/(1-p). Identity when not
/// training or p == 0.
inline Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  std::vector<double> y(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask[i] = keep(rng) ? s : 0.0;
    y[i] = xv[i] * mask[i];
  }
  return make_result(x.rows(), x.cols(), std::move(y), {&x}, [mask = std::move(mask)](Node& self) {
    Node* px = grad_parent(self, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) px->grad[i] += self.grad[i] * mask[i];
  });
}

/// Valid stride-1 convolution of `filters` ([k x w*C], offset-major rows)
/// over `input` ([L x C]) followed by max-pooling over time; returns [k x 1].
/// Ties go to the earliest position, which is also where the gradient flows.
inline Tensor conv1d_maxpool(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  const std::size_t len = input.rows(), ch = input.cols(), k = filters.rows();
  if (ch == 0 || filters.cols() % ch != 0) detail::shape_fail("conv1d_maxpool", input, filters);
  if (bias.rows() != k || bias.cols() != 1) detail::shape_fail("conv1d_maxpool bias", filters, bias);
  const std::size_t width = filters.cols() / ch;
  if (len < width)
    throw ContractViolation("conv1d_maxpool: input length " + std::to_string(len) + " shorter than filter width " +
                            std::to_string(width));
  const std::size_t positions = len - width + 1, span = width * ch;
  auto in = input.values();
  auto fv = filters.values();
  std::vector<double> y(k);
  std::vector<std::size_t> argmax(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double* f = &fv[j * span];
    double best = 0.0;
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < positions; ++t) {
      const double* window = &in[t * ch];
      double s = 0.0;
      for (std::size_t q = 0; q < span; ++q) s += f[q] * window[q];
      if (t == 0 || s > best) {
        best = s;
        best_t = t;
      }
    }
    y[j] = best + bias[j];
    argmax[j] = best_t;
  }
  return make_result(k, 1, std::move(y), {&input, &filters, &bias},
                     [argmax = std::move(argmax), ch, span](Node& self) {
                       Node* pi = grad_parent(self, 0);
                       Node* pf = grad_parent(self, 1);
                       Node* pb = grad_parent(self, 2);
                       const auto& in = self.parents[0]->value;
                       const auto& fv = self.parents[1]->value;
                       for (std::size_t j = 0; j < argmax.size(); ++j) {
                         const double g = self.grad[j];
                         const std::size_t base = argmax[j] * ch;
                         if (pb) pb->grad[j] += g;
                         for (std::size_t q = 0; q < span; ++q) {
                           if (pf) pf->grad[j * span + q] += g * in[base + q];
                           if (pi) pi->grad[base + q] += g * fv[j * span + q];
                         }
                       }
                     });
}

/// Same-length 1-D convolution of a length-T signal (any shape with T
/// elements) with `filters` ([k x r]); returns [k x T]. Zero padding puts
/// (r-1)/2 positions before the signal, so a unit impulse at position j
/// reproduces each filter centred on j.
inline Tensor conv1d_same(const Tensor& signal, const Tensor& filters) {
  const std::size_t len = signal.size(), k = filters.rows(), r = filters.cols();
  const auto left = static_cast<std::ptrdiff_t>((r - 1) / 2);
  auto a = signal.values();
  auto fv = filters.values();
  std::vector<double> y(k * len, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < len; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < r; ++o) {
        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(o) + left;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) s += fv[j * r + o] * a[static_cast<std::size_t>(src)];
      }
      y[j * len + i] = s;
    }
  return make_result(k, len, std::move(y), {&signal, &filters}, [k, len, r, left](Node& self) {
    Node* ps = grad_parent(self, 0);
    Node* pf = grad_parent(self, 1);
    const auto& a = self.parents[0]->value;
    const auto& fv = self.parents[1]->value;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < len; ++i) {
        const double g = self.grad[j * len + i];
        if (g == 0.0) continue;
        for (std::size_t o = 0; o < r; ++o) {
          std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(o) + left;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          const auto s = static_cast<std::size_t>(src);
          if (pf) pf->grad[j * r + o] += g * a[s];
          if (ps) ps->grad[s] += g * fv[j * r + o];
        }
      }
  });
}

}  // namespace prosparse::ad
