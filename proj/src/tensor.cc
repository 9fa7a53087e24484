// Copyright 2026 The uasr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "uasr/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace uasr {

namespace {

thread_local bool g_grad_enabled = true;

void Require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

void RequireMatrix(const Shape& s, const char* op) {
  Require(s.size() == 2, std::string(op) + ": expected a matrix, got " +
                             ShapeString(s));
}

template <typename T>
T Sigm(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

size_t NumElements(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::Zeros(const Shape& shape, bool requires_grad) {
  return Full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::Full(const Shape& shape, T fill, bool requires_grad) {
  return FromData(shape, std::vector<T>(NumElements(shape), fill),
                  requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::FromData(const Shape& shape, std::vector<T> values,
                              bool requires_grad) {
  for (int d : shape) Require(d > 0, "tensor extents must be positive");
  Require(NumElements(shape) == values.size(),
          "tensor data size does not match shape " + ShapeString(shape));
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite tensor value");
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::Scalar(T v, bool requires_grad) {
  return FromData({1}, {v}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::FromOp(const char* op, Shape shape, std::vector<T> values,
                            std::vector<Tensor> inputs, BackwardFn backward) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  Require(size() == 1, "item() on non-scalar tensor " + ShapeString(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::Backward() {
  Require(size() == 1, "Backward() requires a scalar");
  if (node_->consumed) {
    throw NumericError("backward called twice without a new forward pass");
  }
  if (!node_->requires_grad) {
    throw NumericError("backward on a tensor that does not require grad");
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        if (child->consumed) {
          throw NumericError(
              "backward through a graph already released by a previous "
              "backward pass");
        }
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->EnsureGrad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
      n->consumed = true;
    }
  }
  node_->consumed = true;
}

template <typename T>
Tensor<T> Tensor<T>::Detach() const {
  return Clone(false);
}

template <typename T>
Tensor<T> Tensor<T>::Clone(bool requires_grad) const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

// ---- operations -----------------------------------------------------------

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b) {
  RequireMatrix(a.shape(), "MatMul");
  RequireMatrix(b.shape(), "MatMul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Require(b.rows() == k, "MatMul: inner dimensions differ " +
                             ShapeString(a.shape()) + " x " +
                             ShapeString(b.shape()));
  std::vector<T> out(static_cast<size_t>(m) * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (int i = 0; i < m; ++i) {
    T* row = &out[i * n];
    for (int p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      for (int j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return Tensor<T>::FromOp(
      "MatMul", {m, n}, std::move(out), {a, b}, [m, k, n](auto& o) {
        auto& an = *o.inputs[0];
        auto& bn = *o.inputs[1];
        const T* G = o.grad.data();
        if (an.requires_grad) {
          T* GA = an.EnsureGrad();
          const T* B = bn.value.data();
          for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
              T acc = 0;
              const T* brow = B + p * n;
              const T* grow = G + i * n;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              GA[i * k + p] += acc;
            }
          }
        }
        if (bn.requires_grad) {
          T* GB = bn.EnsureGrad();
          const T* A = an.value.data();
          for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
              const T av = A[i * k + p];
              T* gbrow = GB + p * n;
              const T* grow = G + i * n;
              for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> Transpose(const Tensor<T>& a) {
  RequireMatrix(a.shape(), "Transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<T> out(a.size());
  const T* A = a.data().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return Tensor<T>::FromOp("Transpose", {n, m}, std::move(out), {a},
                           [m, n](auto& o) {
                             T* GA = o.inputs[0]->EnsureGrad();
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j)
                                 GA[i * n + j] += o.grad[j * m + i];
                           });
}

namespace {

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> Binary(const char* op, const Tensor<T>& a, const Tensor<T>& b,
                 Fwd fwd, DA da, DB db) {
  Require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      ShapeString(a.shape()) + " vs " +
                                      ShapeString(b.shape()));
  std::vector<T> out(a.size());
  auto av = a.data();
  auto bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return Tensor<T>::FromOp(op, a.shape(), std::move(out), {a, b},
                           [da, db](auto& o) {
                             auto& an = *o.inputs[0];
                             auto& bn = *o.inputs[1];
                             const size_t n = o.value.size();
                             if (an.requires_grad) {
                               T* g = an.EnsureGrad();
                               for (size_t i = 0; i < n; ++i)
                                 g[i] += o.grad[i] *
                                         da(an.value[i], bn.value[i]);
                             }
                             if (bn.requires_grad) {
                               T* g = bn.EnsureGrad();
                               for (size_t i = 0; i < n; ++i)
                                 g[i] += o.grad[i] *
                                         db(an.value[i], bn.value[i]);
                             }
                           });
}

// Elementwise unary op whose derivative is expressed through (x, y).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> Unary(const char* op, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  std::vector<T> out(a.size());
  auto av = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return Tensor<T>::FromOp(op, a.shape(), std::move(out), {a},
                           [deriv](auto& o) {
                             auto& an = *o.inputs[0];
                             T* g = an.EnsureGrad();
                             for (size_t i = 0; i < o.value.size(); ++i)
                               g[i] += o.grad[i] *
                                       deriv(an.value[i], o.value[i]);
                           });
}

}  // namespace

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  return Binary<T>(
      "Add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b) {
  return Binary<T>(
      "Sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  return Binary<T>(
      "Mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor) {
  return Unary<T>(
      "Scale", a, [factor](T x) { return x * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> AddRowVector(const Tensor<T>& a, const Tensor<T>& b) {
  RequireMatrix(a.shape(), "AddRowVector");
  const int m = a.rows(), n = a.cols();
  Require(b.size() == static_cast<size_t>(n),
          "AddRowVector: vector length differs from column count");
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return Tensor<T>::FromOp("AddRowVector", a.shape(), std::move(out), {a, b},
                           [m, n](auto& o) {
                             auto& an = *o.inputs[0];
                             auto& bn = *o.inputs[1];
                             if (an.requires_grad) {
                               T* g = an.EnsureGrad();
                               for (size_t i = 0; i < o.grad.size(); ++i)
                                 g[i] += o.grad[i];
                             }
                             if (bn.requires_grad) {
                               T* g = bn.EnsureGrad();
                               for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < n; ++j)
                                   g[j] += o.grad[i * n + j];
                             }
                           });
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& a) {
  return Unary<T>(
      "Relu", a, [](T x) { return x > 0 ? x : T(0); },
      [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& a) {
  return Unary<T>(
      "Sigmoid", a, [](T x) { return Sigm(x); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> Swish(const Tensor<T>& a) {
  return Unary<T>(
      "Swish", a, [](T x) { return x * Sigm(x); },
      [](T x, T) {
        const T s = Sigm(x);
        return s * (T(1) + x * (T(1) - s));
      });
}

template <typename T>
Tensor<T> Glu(const Tensor<T>& a) {
  RequireMatrix(a.shape(), "Glu");
  Require(a.cols() % 2 == 0, "Glu: column count must be even");
  const int m = a.rows(), n = a.cols() / 2;
  std::vector<T> out(static_cast<size_t>(m) * n);
  auto av = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[i * n + j] = av[i * 2 * n + j] * Sigm(av[i * 2 * n + n + j]);
  return Tensor<T>::FromOp(
      "Glu", {m, n}, std::move(out), {a}, [m, n](auto& o) {
        auto& an = *o.inputs[0];
        T* g = an.EnsureGrad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            const T x = an.value[i * 2 * n + j];
            const T s = Sigm(an.value[i * 2 * n + n + j]);
            const T go = o.grad[i * n + j];
            g[i * 2 * n + j] += go * s;
            g[i * 2 * n + n + j] += go * x * s * (T(1) - s);
          }
        }
      });
}

template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps) {
  RequireMatrix(x.shape(), "LayerNorm");
  const int m = x.rows(), n = x.cols();
  Require(gamma.size() == static_cast<size_t>(n) &&
              beta.size() == static_cast<size_t>(n),
          "LayerNorm: gain/bias length differs from column count");
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(m);
  std::vector<T> out(x.size());
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (int i = 0; i < m; ++i) {
    T mean = 0;
    for (int j = 0; j < n; ++j) mean += xv[i * n + j];
    mean /= n;
    T var = 0;
    for (int j = 0; j < n; ++j) {
      const T d = xv[i * n + j] - mean;
      var += d * d;
    }
    var /= n;
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mean) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return Tensor<T>::FromOp(
      "LayerNorm", x.shape(), std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](auto& o) {
        auto& xn = *o.inputs[0];
        auto& gn = *o.inputs[1];
        auto& bn = *o.inputs[2];
        const T* G = o.grad.data();
        if (gn.requires_grad) {
          T* gg = gn.EnsureGrad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gg[j] += G[i * n + j] * xhat[i * n + j];
        }
        if (bn.requires_grad) {
          T* gb = bn.EnsureGrad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gb[j] += G[i * n + j];
        }
        if (xn.requires_grad) {
          T* gx = xn.EnsureGrad();
          std::vector<T> dxhat(n);
          for (int i = 0; i < m; ++i) {
            T mean_d = 0, mean_dx = 0;
            for (int j = 0; j < n; ++j) {
              dxhat[j] = G[i * n + j] * gn.value[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[i * n + j];
            }
            mean_d /= n;
            mean_dx /= n;
            for (int j = 0; j < n; ++j)
              gx[i * n + j] += inv_std[i] * (dxhat[j] - mean_d -
                                             xhat[i * n + j] * mean_dx);
          }
        }
      });
}

template <typename T>
Tensor<T> Embedding(const Tensor<T>& table, std::span<const int> ids) {
  RequireMatrix(table.shape(), "Embedding");
  const int v = table.rows();
  for (int id : ids) {
    if (id < 0 || id >= v)
      throw std::out_of_range("Embedding: token id " + std::to_string(id) +
                              " outside [0, " + std::to_string(v) + ")");
  }
  return GatherRows(table, ids);
}

template <typename T>
Tensor<T> LogSoftmax(const Tensor<T>& x) {
  RequireMatrix(x.shape(), "LogSoftmax");
  const int m = x.rows(), n = x.cols();
  std::vector<T> out(x.size());
  auto xv = x.data();
  for (int i = 0; i < m; ++i) {
    T mx = xv[i * n];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    T s = 0;
    for (int j = 0; j < n; ++j) s += std::exp(xv[i * n + j] - mx);
    const T lse = mx + std::log(s);
    for (int j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] - lse;
  }
  return Tensor<T>::FromOp("LogSoftmax", x.shape(), std::move(out), {x},
                           [m, n](auto& o) {
                             T* g = o.inputs[0]->EnsureGrad();
                             for (int i = 0; i < m; ++i) {
                               T gs = 0;
                               for (int j = 0; j < n; ++j)
                                 gs += o.grad[i * n + j];
                               for (int j = 0; j < n; ++j)
                                 g[i * n + j] +=
                                     o.grad[i * n + j] -
                                     std::exp(o.value[i * n + j]) * gs;
                             }
                           });
}

template <typename T>
Tensor<T> MaskedSoftmax(const Tensor<T>& scores, const BoolMatrix& mask) {
  RequireMatrix(scores.shape(), "MaskedSoftmax");
  const int m = scores.rows(), n = scores.cols();
  Require(mask.rows == m && mask.cols == n,
          "MaskedSoftmax: mask shape differs from scores");
  std::vector<T> out(scores.size(), T(0));
  auto sv = scores.data();
  for (int i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < n; ++j)
      if (mask(i, j)) mx = std::max(mx, sv[i * n + j]);
    if (mx == -std::numeric_limits<T>::infinity())
      throw NumericError("fully masked attention row");
    T s = 0;
    for (int j = 0; j < n; ++j) {
      if (mask(i, j)) {
        out[i * n + j] = std::exp(sv[i * n + j] - mx);
        s += out[i * n + j];
      }
    }
    for (int j = 0; j < n; ++j) out[i * n + j] /= s;
  }
  return Tensor<T>::FromOp("MaskedSoftmax", scores.shape(), std::move(out),
                           {scores}, [m, n](auto& o) {
                             T* g = o.inputs[0]->EnsureGrad();
                             for (int i = 0; i < m; ++i) {
                               T dot = 0;
                               for (int j = 0; j < n; ++j)
                                 dot += o.grad[i * n + j] * o.value[i * n + j];
                               for (int j = 0; j < n; ++j)
                                 g[i * n + j] += o.value[i * n + j] *
                                                 (o.grad[i * n + j] - dot);
                             }
                           });
}

template <typename T>
Tensor<T> Conv1d(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                 PaddingMode padding) {
  RequireMatrix(input.shape(), "Conv1d");
  Require(kernel.ndim() == 3, "Conv1d: kernel must be [K, C_in, C_out]");
  Require(stride >= 1, "Conv1d: stride must be positive");
  const int t_in = input.rows(), cin = input.cols();
  const int k = kernel.dim(0), cout = kernel.dim(2);
  Require(kernel.dim(1) == cin, "Conv1d: kernel input channels differ");
  int t_out = 0;
  int offset = 0;  // input index of tap 0 for output frame 0
  if (padding == PaddingMode::kCausal) {
    Require(stride == 1, "Conv1d: causal padding requires stride 1");
    t_out = t_in;
    offset = -(k - 1);
  } else {
    if (t_in < k) throw std::invalid_argument("sequence too short");
    t_out = (t_in - k) / stride + 1;
  }
  std::vector<T> out(static_cast<size_t>(t_out) * cout, T(0));
  auto x = input.data();
  auto w = kernel.data();
  for (int t = 0; t < t_out; ++t) {
    T* orow = &out[t * cout];
    for (int tap = 0; tap < k; ++tap) {
      const int src = t * stride + offset + tap;
      if (src < 0 || src >= t_in) continue;
      for (int c = 0; c < cin; ++c) {
        const T xv = x[src * cin + c];
        const T* wrow = &w[(tap * cin + c) * cout];
        for (int o = 0; o < cout; ++o) orow[o] += xv * wrow[o];
      }
    }
  }
  return Tensor<T>::FromOp(
      "Conv1d", {t_out, cout}, std::move(out), {input, kernel},
      [=](auto& o) {
        auto& xn = *o.inputs[0];
        auto& wn = *o.inputs[1];
        T* gx = xn.requires_grad ? xn.EnsureGrad() : nullptr;
        T* gw = wn.requires_grad ? wn.EnsureGrad() : nullptr;
        for (int t = 0; t < t_out; ++t) {
          const T* grow = &o.grad[t * cout];
          for (int tap = 0; tap < k; ++tap) {
            const int src = t * stride + offset + tap;
            if (src < 0 || src >= t_in) continue;
            for (int c = 0; c < cin; ++c) {
              const T* wrow = &wn.value[(tap * cin + c) * cout];
              if (gx) {
                T acc = 0;
                for (int q = 0; q < cout; ++q) acc += grow[q] * wrow[q];
                gx[src * cin + c] += acc;
              }
              if (gw) {
                const T xv = xn.value[src * cin + c];
                T* gwrow = &gw[(tap * cin + c) * cout];
                for (int q = 0; q < cout; ++q) gwrow[q] += xv * grow[q];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> DepthwiseCausalConv1d(const Tensor<T>& input,
                                const Tensor<T>& kernel) {
  RequireMatrix(input.shape(), "DepthwiseCausalConv1d");
  RequireMatrix(kernel.shape(), "DepthwiseCausalConv1d");
  const int t_in = input.rows(), c = input.cols(), k = kernel.rows();
  Require(kernel.cols() == c, "DepthwiseCausalConv1d: channel mismatch");
  std::vector<T> out(input.size(), T(0));
  auto x = input.data();
  auto w = kernel.data();
  for (int t = 0; t < t_in; ++t)
    for (int tap = 0; tap < k; ++tap) {
      const int src = t - (k - 1) + tap;
      if (src < 0) continue;
      for (int ch = 0; ch < c; ++ch)
        out[t * c + ch] += x[src * c + ch] * w[tap * c + ch];
    }
  return Tensor<T>::FromOp(
      "DepthwiseCausalConv1d", input.shape(), std::move(out), {input, kernel},
      [=](auto& o) {
        auto& xn = *o.inputs[0];
        auto& wn = *o.inputs[1];
        T* gx = xn.requires_grad ? xn.EnsureGrad() : nullptr;
        T* gw = wn.requires_grad ? wn.EnsureGrad() : nullptr;
        for (int t = 0; t < t_in; ++t)
          for (int tap = 0; tap < k; ++tap) {
            const int src = t - (k - 1) + tap;
            if (src < 0) continue;
            for (int ch = 0; ch < c; ++ch) {
              const T go = o.grad[t * c + ch];
              if (gx) gx[src * c + ch] += go * wn.value[tap * c + ch];
              if (gw) gw[tap * c + ch] += go * xn.value[src * c + ch];
            }
          }
      });
}

template <typename T>
Tensor<T> SliceCols(const Tensor<T>& a, int start, int len) {
  RequireMatrix(a.shape(), "SliceCols");
  const int m = a.rows(), n = a.cols();
  Require(start >= 0 && len >= 1 && start + len <= n,
          "SliceCols: range out of bounds");
  std::vector<T> out(static_cast<size_t>(m) * len);
  auto av = a.data();
  for (int i = 0; i < m; ++i)
    std::copy_n(&av[i * n + start], len, &out[i * len]);
  return Tensor<T>::FromOp("SliceCols", {m, len}, std::move(out), {a},
                           [m, n, start, len](auto& o) {
                             T* g = o.inputs[0]->EnsureGrad();
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < len; ++j)
                                 g[i * n + start + j] += o.grad[i * len + j];
                           });
}

template <typename T>
Tensor<T> ConcatCols(const std::vector<Tensor<T>>& parts) {
  Require(!parts.empty(), "ConcatCols: no inputs");
  const int m = parts[0].rows();
  std::vector<int> widths;
  int n = 0;
  for (const auto& p : parts) {
    RequireMatrix(p.shape(), "ConcatCols");
    Require(p.rows() == m, "ConcatCols: row counts differ");
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<T> out(static_cast<size_t>(m) * n);
  int col = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    auto pv = p.data();
    for (int i = 0; i < m; ++i) std::copy_n(&pv[i * w], w, &out[i * n + col]);
    col += w;
  }
  return Tensor<T>::FromOp("ConcatCols", {m, n}, std::move(out), parts,
                           [m, n, widths](auto& o) {
                             int col = 0;
                             for (size_t p = 0; p < widths.size(); ++p) {
                               auto& in = *o.inputs[p];
                               const int w = widths[p];
                               if (in.requires_grad) {
                                 T* g = in.EnsureGrad();
                                 for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < w; ++j)
                                     g[i * w + j] += o.grad[i * n + col + j];
                               }
                               col += w;
                             }
                           });
}

template <typename T>
Tensor<T> ConcatRows(const std::vector<Tensor<T>>& parts) {
  Require(!parts.empty(), "ConcatRows: no inputs");
  const int n = parts[0].cols();
  int m = 0;
  std::vector<T> out;
  std::vector<size_t> starts;
  for (const auto& p : parts) {
    RequireMatrix(p.shape(), "ConcatRows");
    Require(p.cols() == n, "ConcatRows: column counts differ");
    starts.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    m += p.rows();
  }
  return Tensor<T>::FromOp("ConcatRows", {m, n}, std::move(out), parts,
                           [starts](auto& o) {
                             for (size_t p = 0; p < starts.size(); ++p) {
                               auto& in = *o.inputs[p];
                               if (!in.requires_grad) continue;
                               T* g = in.EnsureGrad();
                               for (size_t i = 0; i < in.value.size(); ++i)
                                 g[i] += o.grad[starts[p] + i];
                             }
                           });
}

template <typename T>
Tensor<T> GatherRows(const Tensor<T>& a, std::span<const int> rows) {
  RequireMatrix(a.shape(), "GatherRows");
  Require(!rows.empty(), "GatherRows: no rows selected");
  const int m = a.rows(), n = a.cols();
  std::vector<int> idx(rows.begin(), rows.end());
  std::vector<T> out(idx.size() * n);
  auto av = a.data();
  for (size_t r = 0; r < idx.size(); ++r) {
    Require(idx[r] >= 0 && idx[r] < m, "GatherRows: row index out of range");
    std::copy_n(&av[idx[r] * n], n, &out[r * n]);
  }
  const int out_rows = static_cast<int>(idx.size());
  return Tensor<T>::FromOp("GatherRows", {out_rows, n}, std::move(out), {a},
                           [n, idx = std::move(idx)](auto& o) {
                             T* g = o.inputs[0]->EnsureGrad();
                             for (size_t r = 0; r < idx.size(); ++r)
                               for (int j = 0; j < n; ++j)
                                 g[idx[r] * n + j] += o.grad[r * n + j];
                           });
}

template <typename T>
Tensor<T> TakeAlongRows(const Tensor<T>& a, std::span<const int> index,
                        int width) {
  RequireMatrix(a.shape(), "TakeAlongRows");
  const int m = a.rows(), n = a.cols();
  Require(width >= 1 && index.size() == static_cast<size_t>(m) * width,
          "TakeAlongRows: index must be rows x width");
  std::vector<int> idx(index.begin(), index.end());
  std::vector<T> out(idx.size());
  auto av = a.data();
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < width; ++k) {
      const int j = idx[i * width + k];
      Require(j >= 0 && j < n, "TakeAlongRows: column index out of range");
      out[i * width + k] = av[i * n + j];
    }
  return Tensor<T>::FromOp("TakeAlongRows", {m, width}, std::move(out), {a},
                           [m, n, width, idx = std::move(idx)](auto& o) {
                             T* g = o.inputs[0]->EnsureGrad();
                             for (int i = 0; i < m; ++i)
                               for (int k = 0; k < width; ++k)
                                 g[i * n + idx[i * width + k]] +=
                                     o.grad[i * width + k];
                           });
}

template <typename T>
Tensor<T> NormalizeRows(const Tensor<T>& a) {
  RequireMatrix(a.shape(), "NormalizeRows");
  const int m = a.rows(), n = a.cols();
  std::vector<T> out(a.size());
  std::vector<T> norms(m);
  auto av = a.data();
  for (int i = 0; i < m; ++i) {
    T s = 0;
    for (int j = 0; j < n; ++j) s += av[i * n + j] * av[i * n + j];
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0)) throw NumericError("degenerate representation");
    for (int j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] / norms[i];
  }
  return Tensor<T>::FromOp("NormalizeRows", a.shape(), std::move(out), {a},
                           [m, n, norms = std::move(norms)](auto& o) {
                             T* g = o.inputs[0]->EnsureGrad();
                             for (int i = 0; i < m; ++i) {
                               T dot = 0;
                               for (int j = 0; j < n; ++j)
                                 dot += o.grad[i * n + j] * o.value[i * n + j];
                               for (int j = 0; j < n; ++j)
                                 g[i * n + j] += (o.grad[i * n + j] -
                                                  o.value[i * n + j] * dot) /
                                                 norms[i];
                             }
                           });
}

template <typename T>
Tensor<T> Sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  return Tensor<T>::FromOp("Sum", {1}, {s}, {a}, [](auto& o) {
    auto& in = *o.inputs[0];
    T* g = in.EnsureGrad();
    for (size_t i = 0; i < in.value.size(); ++i) g[i] += o.grad[0];
  });
}

template <typename T>
Tensor<T> Mean(const Tensor<T>& a) {
  return Scale(Sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> Dropout(const Tensor<T>& a, T rate, std::mt19937_64& rng) {
  Require(rate >= 0 && rate < 1, "Dropout: rate must lie in [0, 1)");
  if (rate == 0) return a;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  std::vector<T> mask(a.size());
  const T scale = T(1) / (T(1) - rate);
  for (auto& m : mask) m = keep(rng) ? scale : T(0);
  return Mul(a, Tensor<T>::FromData(a.shape(), std::move(mask)));
}

#define UASR_INSTANTIATE(T)                                                   \
  template class Tensor<T>;                                                   \
  template Tensor<T> MatMul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> Transpose(const Tensor<T>&);                             \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Scale(const Tensor<T>&, T);                              \
  template Tensor<T> AddRowVector(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> Relu(const Tensor<T>&);                                  \
  template Tensor<T> Sigmoid(const Tensor<T>&);                               \
  template Tensor<T> Swish(const Tensor<T>&);                                 \
  template Tensor<T> Glu(const Tensor<T>&);                                   \
  template Tensor<T> LayerNorm(const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&, T);                          \
  template Tensor<T> Embedding(const Tensor<T>&, std::span<const int>);       \
  template Tensor<T> LogSoftmax(const Tensor<T>&);                            \
  template Tensor<T> MaskedSoftmax(const Tensor<T>&, const BoolMatrix&);      \
  template Tensor<T> Conv1d(const Tensor<T>&, const Tensor<T>&, int,          \
                            PaddingMode);                                     \
  template Tensor<T> DepthwiseCausalConv1d(const Tensor<T>&,                  \
                                           const Tensor<T>&);                 \
  template Tensor<T> SliceCols(const Tensor<T>&, int, int);                   \
  template Tensor<T> ConcatCols(const std::vector<Tensor<T>>&);               \
  template Tensor<T> ConcatRows(const std::vector<Tensor<T>>&);               \
  template Tensor<T> GatherRows(const Tensor<T>&, std::span<const int>);      \
  template Tensor<T> TakeAlongRows(const Tensor<T>&, std::span<const int>,    \
                                   int);                                      \
  template Tensor<T> NormalizeRows(const Tensor<T>&);                         \
  template Tensor<T> Sum(const Tensor<T>&);                                   \
  template Tensor<T> Mean(const Tensor<T>&);                                  \
  template Tensor<T> Dropout(const Tensor<T>&, T, std::mt19937_64&);

UASR_INSTANTIATE(float)
UASR_INSTANTIATE(double)

#undef UASR_INSTANTIATE

}  // namespace uasr
