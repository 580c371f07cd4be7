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
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "prosparse/autodiff/tensor.hpp"
#include "prosparse/error.hpp"

namespace prosparse::ad {

namespace detail {

[[noreturn]] inline void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
  throw ShapeError(op + ": incompatible shapes " + a.shape() + " and " + b.shape());
}

template <class F, class G>
Tensor unary(const Tensor& x, F forward, G derivative_from_output) {
  std::vector<double> y(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = forward(xv[i]);
  return make_result(x.rows(), x.cols(), std::move(y), {&x}, [derivative_from_output](Node& self) {
    Node* px = grad_parent(self, 0);
    for (std::size_t i = 0; i < self.value.size(); ++i)
      px->grad[i] += self.grad[i] * derivative_from_output(self.value[i], px->value[i]);
  });
}

}  // namespace detail

/// [m x k] * [k x n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_fail("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  return make_result(m, n, std::move(c), {&a, &b}, [m, k, n](Node& self) {
    Node* pa = grad_parent(self, 0);
    Node* pb = grad_parent(self, 1);
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    for (std::size_t i = 0; i < m; ++i) {
      const double* g = &self.grad[i * n];
      for (std::size_t p = 0; p < k; ++p) {
        if (pa) {
          double s = 0.0;
          const double* brow = &B[p * n];
          for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
          pa->grad[i * k + p] += s;
        }
        if (pb) {
          const double aip = A[i * k + p];
          double* gb = &pb->grad[p * n];
          for (std::size_t j = 0; j < n; ++j) gb[j] += aip * g[j];
        }
      }
    }
  });
}

/// W x + b with `b` ([m x 1]) broadcast over the columns of x.
inline Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.cols() != x.rows()) detail::shape_fail("affine", w, x);
  if (b.rows() != w.rows() || b.cols() != 1) detail::shape_fail("affine bias", w, b);
  const std::size_t m = w.rows(), k = w.cols(), n = x.cols();
  std::vector<double> y(m * n);
  auto wv = w.values();
  auto xv = x.values();
  auto bv = b.values();
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* wrow = &wv[i * k];
      double s = bv[i];
      for (std::size_t p = 0; p < k; ++p) s += wrow[p] * xv[p];
      y[i] = s;
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double* yrow = &y[i * n];
      std::fill(yrow, yrow + n, bv[i]);
      for (std::size_t p = 0; p < k; ++p) {
        const double wip = wv[i * k + p];
        const double* xrow = &xv[p * n];
        for (std::size_t j = 0; j < n; ++j) yrow[j] += wip * xrow[j];
      }
    }
  }
  return make_result(m, n, std::move(y), {&w, &x, &b}, [m, k, n](Node& self) {
    Node* pw = grad_parent(self, 0);
    Node* px = grad_parent(self, 1);
    Node* pb = grad_parent(self, 2);
    const auto& W = self.parents[0]->value;
    const auto& X = self.parents[1]->value;
    for (std::size_t i = 0; i < m; ++i) {
      const double* g = &self.grad[i * n];
      if (pb) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[j];
        pb->grad[i] += s;
      }
      for (std::size_t p = 0; p < k; ++p) {
        const double* xrow = &X[p * n];
        if (pw) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[j] * xrow[j];
          pw->grad[i * k + p] += s;
        }
        if (px) {
          const double wip = W[i * k + p];
          double* gx = &px->grad[p * n];
          for (std::size_t j = 0; j < n; ++j) gx[j] += wip * g[j];
        }
      }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("add", a, b);
  std::vector<double> y(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return make_result(a.rows(), a.cols(), std::move(y), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Node* p = grad_parent(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

/// Adds column vector `v` ([m x 1]) to every column of `m`.
inline Tensor add_col(const Tensor& m, const Tensor& v) {
  if (v.rows() != m.rows() || v.cols() != 1) detail::shape_fail("add_col", m, v);
  const std::size_t rows = m.rows(), cols = m.cols();
  std::vector<double> y(m.size());
  auto mv = m.values();
  auto vv = v.values();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = mv[i * cols + j] + vv[i];
  return make_result(rows, cols, std::move(y), {&m, &v}, [rows, cols](Node& self) {
    Node* pm = grad_parent(self, 0);
    Node* pv = grad_parent(self, 1);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        double g = self.grad[i * cols + j];
        if (pm) pm->grad[i * cols + j] += g;
        if (pv) pv->grad[i] += g;
      }
  });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("mul", a, b);
  std::vector<double> y(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return make_result(a.rows(), a.cols(), std::move(y), {&a, &b}, [](Node& self) {
    Node* pa = grad_parent(self, 0);
    Node* pb = grad_parent(self, 1);
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa) pa->grad[i] += self.grad[i] * B[i];
      if (pb) pb->grad[i] += self.grad[i] * A[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> y(a.values().begin(), a.values().end());
  for (auto& v : y) v *= s;
  return make_result(a.rows(), a.cols(), std::move(y), {&a}, [s](Node& self) {
    Node* pa = grad_parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += s * self.grad[i];
  });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double y, double) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double y, double) { return y * (1.0 - y); });
}

/// Softmax over all elements, shape preserved.
inline Tensor softmax(const Tensor& x) {
  auto xv = x.values();
  if (xv.empty()) throw ShapeError("softmax: empty input");
  double mx = *std::max_element(xv.begin(), xv.end());
  std::vector<double> y(xv.size());
  double z = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) z += (y[i] = std::exp(xv[i] - mx));
  for (auto& v : y) v /= z;
  return make_result(x.rows(), x.cols(), std::move(y), {&x}, [](Node& self) {
    Node* px = grad_parent(self, 0);
    double dot = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.value[i] * (self.grad[i] - dot);
  });
}

/// -log softmax(logits)[target] as a scalar.
inline Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  auto lv = logits.values();
  if (target >= lv.size())
    throw ShapeError("cross_entropy: target " + std::to_string(target) + " outside " + logits.shape());
  double mx = *std::max_element(lv.begin(), lv.end());
  std::vector<double> p(lv.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(lv[i] - mx));
  for (auto& v : p) v /= z;
  double loss = -(lv[target] - mx - std::log(z));
  return make_result(1, 1, {loss}, {&logits}, [p = std::move(p), target](Node& self) {
    Node* pl = grad_parent(self, 0);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.size(); ++i) pl->grad[i] += g * (p[i] - (i == target ? 1.0 : 0.0));
  });
}

/// Sum of all elements.
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result(1, 1, {s}, {&x}, [](Node& self) {
    Node* px = grad_parent(self, 0);
    for (auto& g : px->grad) g += self.grad[0];
  });
}

/// Sum of a list of scalars.
inline Tensor sum_scalars(const std::vector<Tensor>& xs) {
  double s = 0.0;
  for (const auto& x : xs) s += x.item();
  return make_result(1, 1, {s}, xs, [](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k)
      if (Node* p = grad_parent(self, k)) p->grad[0] += self.grad[0];
  });
}

/// Stacks tensors with equal column counts on top of each other.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_fail("concat", parts.front(), p);
    rows += p.rows();
  }
  std::vector<double> y;
  y.reserve(rows * cols);
  for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  return make_result(rows, cols, std::move(y), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t n = self.parents[k]->value.size();
      if (Node* p = grad_parent(self, k))
        for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[offset + i];
      offset += n;
    }
  });
}

/// Rows [start, start + count).
inline Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  if (start + count > x.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + x.shape());
  const std::size_t cols = x.cols();
  std::vector<double> y(x.values().begin() + static_cast<std::ptrdiff_t>(start * cols),
                        x.values().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  return make_result(count, cols, std::move(y), {&x}, [start, cols](Node& self) {
    Node* px = grad_parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[start * cols + i] += self.grad[i];
  });
}

/// [d x 1] columns side by side -> [d x n].
inline Tensor stack_columns(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw ShapeError("stack_columns: no inputs");
  const std::size_t d = cols.front().rows(), n = cols.size();
  for (const auto& c : cols)
    if (c.rows() != d || c.cols() != 1) detail::shape_fail("stack_columns", cols.front(), c);
  std::vector<double> y(d * n);
  for (std::size_t j = 0; j < n; ++j) {
    auto v = cols[j].values();
    for (std::size_t i = 0; i < d; ++i) y[i * n + j] = v[i];
  }
  return make_result(d, n, std::move(y), cols, [d, n](Node& self) {
    for (std::size_t j = 0; j < n; ++j)
      if (Node* p = grad_parent(self, j))
        for (std::size_t i = 0; i < d; ++i) p->grad[i] += self.grad[i * n + j];
  });
}

/// Column `j` of `x` as [rows x 1].
inline Tensor column(const Tensor& x, std::size_t j) {
  if (j >= x.cols()) throw ShapeError("column: index " + std::to_string(j) + " outside " + x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = x(i, j);
  return make_result(rows, 1, std::move(y), {&x}, [j, cols](Node& self) {
    Node* px = grad_parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i * cols + j] += self.grad[i];
  });
}

inline Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.size()) throw ShapeError("reshape: " + x.shape() + " to " + shape_str(rows, cols));
  std::vector<double> y(x.values().begin(), x.values().end());
  return make_result(rows, cols, std::move(y), {&x}, [](Node& self) {
    Node* px = grad_parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
  });
}

/// Row `id` of `table` ([V x d]) as a [d x 1] column.
inline Tensor embedding(const Tensor& table, std::size_t id) {
  if (id >= table.rows())
    throw ShapeError("embedding: id " + std::to_string(id) + " outside table " + table.shape());
  const std::size_t d = table.cols();
  std::vector<double> y(table.values().begin() + static_cast<std::ptrdiff_t>(id * d),
                        table.values().begin() + static_cast<std::ptrdiff_t>((id + 1) * d));
  return make_result(d, 1, std::move(y), {&table}, [id, d](Node& self) {
    Node* pt = grad_parent(self, 0);
    for (std::size_t i = 0; i < d; ++i) pt->grad[id * d + i] += self.grad[i];
  });
}

}  // namespace prosparse::ad
