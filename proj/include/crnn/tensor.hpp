// Copyright 2026 The crnn Authors. All Rights Reserved.
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

// Dense binary64 tensors with a tape-free reverse-mode autodiff graph.
//
// Each Tensor is a handle to a shared node. Operations on tensors that
// require gradients record their inputs and a backward rule on the result;
// Tensor::backward() walks the recorded DAG in reverse topological order.
// Gradients of leaves accumulate across backward calls until zero_grad().

#ifndef CRNN_TENSOR_HPP_
#define CRNN_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace crnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);
  // True when the tensor has no recorded backward rule.
  bool is_leaf() const;

  bool has_grad() const;
  // Accumulated gradient; empty span when has_grad() is false.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Seeds d(root)/d(root) = 1 and propagates to every node that requires a
  // gradient. Throws UsageError when called on a non-scalar or a tensor that
  // is not part of a recorded graph.
  void backward() const;

  // Same values, no graph history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend Tensor record(Shape, std::vector<double>, const std::vector<Tensor>&,
                       std::function<void(std::span<const double>,
                                          std::span<std::vector<double>*>)>);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Receives the output gradient and one gradient buffer per input (nullptr
// for inputs that do not require a gradient). Buffers are sized like the
// input and must be accumulated into, never overwritten.
using BackwardRule =
    std::function<void(std::span<const double> out_grad,
                       std::span<std::vector<double>*> input_grads)>;

// Creates an op result. When gradient recording is enabled and any input
// requires a gradient, the result keeps the inputs and the rule alive.
Tensor record(Shape shape, std::vector<double> values,
              const std::vector<Tensor>& inputs, BackwardRule rule);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- primitive operations -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a[m x n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Columns [begin, begin + count) of a rank-2 tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Rows [begin, begin + count) of a rank-2 tensor.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

// Row-wise softmax of a rank-2 tensor, max-subtracted.
Tensor softmax_rows(const Tensor& a);

struct Conv2dParams {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

// Cross-correlation with zero padding. `input` is [C x H x W] or
// [N x C x H x W]; `kernels` is [C_out x C x kh x kw]; `bias` is [C_out] or
// undefined. The output keeps the input's rank.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const Conv2dParams& params);

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t pad);

struct Pool2dParams {
  std::size_t window_h = 2;
  std::size_t window_w = 2;
  std::size_t stride_h = 2;
  std::size_t stride_w = 2;
};

// Max pooling without padding over [C x H x W] or [N x C x H x W]. Ties route
// the gradient to the first maximum in row-major scan order.
Tensor maxpool2d(const Tensor& input, const Pool2dParams& params);

enum class BatchNormMode { kTrain, kInfer };

// Per-channel running statistics owned by a batch-norm layer.
struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool initialized = false;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Normalizes each channel of [C x H x W] or [N x C x H x W]. Train mode uses
// batch statistics and updates `stats`; infer mode reads `stats` and throws
// StateError if no statistics have been gathered yet.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormStats& stats, BatchNormMode mode);

}  // namespace crnn

#endif  // CRNN_TENSOR_HPP_
