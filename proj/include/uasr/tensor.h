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

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations that consume
// tensors requiring gradients record their inputs and a local gradient rule
// in the output node; Backward() on a scalar walks the recorded graph in
// reverse topological order. Every operation output is checked for
// non-finite values.
//
// Precision is a template parameter: float for training and decoding,
// double for gradient checks and oracles. Both are explicitly instantiated.

#ifndef UASR_TENSOR_H_
#define UASR_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uasr {

using Shape = std::vector<int>;

// Raised when a numeric precondition fails (non-finite values, fully masked
// rows, degenerate vectors, misuse of the graph).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major boolean matrix; used for attention masks.
struct BoolMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> values;

  BoolMatrix() = default;
  BoolMatrix(int r, int c, bool fill = false)
      : rows(r), cols(c), values(static_cast<size_t>(r) * c, fill ? 1 : 0) {}
  bool operator()(int i, int j) const { return values[i * cols + j] != 0; }
  void Set(int i, int j, bool v) { values[i * cols + j] = v ? 1 : 0; }
  bool operator==(const BoolMatrix&) const = default;
};

namespace internal {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until gradients flow into this node
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  T* EnsureGrad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

}  // namespace internal

// Gradient recording is on by default; NoGradGuard turns it off for the
// current thread (inference paths).
bool GradEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using Node = internal::Node<T>;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;

  static Tensor Zeros(const Shape& shape, bool requires_grad = false);
  static Tensor Full(const Shape& shape, T fill, bool requires_grad = false);
  static Tensor FromData(const Shape& shape, std::vector<T> values,
                         bool requires_grad = false);
  static Tensor Scalar(T v, bool requires_grad = false);

  // Builds an operation result. When gradient recording is enabled and any
  // input requires gradients, the inputs and rule are retained; otherwise
  // the result is a constant. Throws NumericError on non-finite values.
  static Tensor FromOp(const char* op, Shape shape, std::vector<T> values,
                       std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(i); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int rows() const { return node_->shape.at(0); }
  int cols() const { return node_->shape.at(1); }
  size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // In-place access for optimizers and initializers only.
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T at(int i, int j) const { return node_->value[i * node_->shape[1] + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return {node_->EnsureGrad(), size()}; }
  void ZeroGrad() { node_->grad.clear(); }

  // Reverse-mode sweep from this scalar. The graph is released afterwards;
  // a second call without a new forward pass throws NumericError.
  void Backward();

  // Constant copy sharing no graph history.
  Tensor Detach() const;
  Tensor Clone(bool requires_grad) const;

  // Identity, not value equality.
  bool SameNode(const Tensor& other) const { return node_ == other.node_; }

  Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

enum class PaddingMode { kCausal, kNone };

// ---- primitive operations (all differentiable) ----------------------------

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Transpose(const Tensor<T>& a);
template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor);
// a[m, n] + b[n] broadcast over rows.
template <typename T>
Tensor<T> AddRowVector(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> Relu(const Tensor<T>& a);
template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& a);
// x * sigmoid(x).
template <typename T>
Tensor<T> Swish(const Tensor<T>& a);
// a[m, 2n] -> a[:, :n] * sigmoid(a[:, n:]).
template <typename T>
Tensor<T> Glu(const Tensor<T>& a);

template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps = T(1e-5));
template <typename T>
Tensor<T> Embedding(const Tensor<T>& table, std::span<const int> ids);

template <typename T>
Tensor<T> LogSoftmax(const Tensor<T>& x);
// Row softmax over positions where mask is true; masked positions get
// exactly zero. Throws NumericError("fully masked attention row").
template <typename T>
Tensor<T> MaskedSoftmax(const Tensor<T>& scores, const BoolMatrix& mask);

// input[T, C_in], kernel[K, C_in, C_out]. Causal mode left-pads K-1 zero
// frames (stride must be 1); none mode yields floor((T-K)/stride)+1 frames.
template <typename T>
Tensor<T> Conv1d(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                 PaddingMode padding);
// Per-channel causal convolution: input[T, C], kernel[K, C].
template <typename T>
Tensor<T> DepthwiseCausalConv1d(const Tensor<T>& input,
                                const Tensor<T>& kernel);

template <typename T>
Tensor<T> SliceCols(const Tensor<T>& a, int start, int len);
template <typename T>
Tensor<T> ConcatCols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> ConcatRows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> GatherRows(const Tensor<T>& a, std::span<const int> rows);
// out[i][k] = a[i][index[i][k]]; index is rows x width, row-major.
template <typename T>
Tensor<T> TakeAlongRows(const Tensor<T>& a, std::span<const int> index,
                        int width);
// Unit-L2 rows; zero rows throw NumericError("degenerate representation").
template <typename T>
Tensor<T> NormalizeRows(const Tensor<T>& a);

template <typename T>
Tensor<T> Sum(const Tensor<T>& a);
template <typename T>
Tensor<T> Mean(const Tensor<T>& a);

// Inverted dropout; identity when rate == 0.
template <typename T>
Tensor<T> Dropout(const Tensor<T>& a, T rate, std::mt19937_64& rng);

}  // namespace uasr

#endif  // UASR_TENSOR_H_
