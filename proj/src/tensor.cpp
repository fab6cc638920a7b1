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

#include "crnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "crnn/error.hpp"
#include "eigen_util.hpp"

namespace crnn {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardRule rule;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_string(shape));
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
  auto in = a.values();
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), f);
  std::vector<double> saved = out;
  return record(a.shape(), std::move(out), {a},
                [saved = std::move(saved), df](std::span<const double> g,
                                               std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  auto& ga = *grads[0];
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * df(saved[i]);
                  }
                });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : node_(std::make_shared<detail::Node>()) {
  check_shape(shape);
  node_->value.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) +
                         " elements, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for " + shape_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<double> Tensor::values() { return node_->value; }
std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  if (!is_leaf()) throw UsageError("requires_grad can only be set on leaves");
  node_->requires_grad = requires_grad;
}

bool Tensor::is_leaf() const { return !node_->rule; }

bool Tensor::has_grad() const {
  return node_->grad.size() == node_->value.size() && !node_->grad.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!has_grad()) return {};
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  if (!defined() || numel() != 1) {
    throw UsageError("backward() requires a scalar root");
  }
  if (!node_->requires_grad) {
    throw UsageError("backward() root is not part of a recorded graph");
  }

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are recomputed on every pass; leaves accumulate.
  for (detail::Node* node : order) {
    if (node->rule) node->grad.assign(node->value.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;

  std::vector<std::vector<double>*> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->rule) continue;
    input_grads.clear();
    for (const auto& input : node->inputs) {
      input_grads.push_back(input->requires_grad ? &input->grad_buffer()
                                                 : nullptr);
    }
    node->rule(node->grad, input_grads);
  }
}

Tensor Tensor::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

Tensor record(Shape shape, std::vector<double> values,
              const std::vector<Tensor>& inputs, BackwardRule rule) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool any = false;
  if (g_grad_enabled) {
    for (const Tensor& input : inputs) any = any || input.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& input : inputs) node->inputs.push_back(input.node_);
    node->rule = std::move(rule);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  if (static_cast<Eigen::Index>(b.dim(0)) != k) {
    throw DimensionError("matmul: inner extents disagree " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n));
  internal::as_matrix(out.data(), m, n).noalias() =
      internal::as_matrix(a.values().data(), m, k) *
      internal::as_matrix(b.values().data(), k, n);
  return record({a.dim(0), b.dim(1)}, std::move(out), {a, b},
                [a, b, m, k, n](std::span<const double> g,
                                std::span<std::vector<double>*> grads) {
                  auto gm = internal::as_matrix(g.data(), m, n);
                  if (grads[0]) {
                    internal::as_matrix(grads[0]->data(), m, k).noalias() +=
                        gm * internal::as_matrix(b.values().data(), k, n)
                                 .transpose();
                  }
                  if (grads[1]) {
                    internal::as_matrix(grads[1]->data(), k, n).noalias() +=
                        internal::as_matrix(a.values().data(), m, k)
                            .transpose() *
                        gm;
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return record(a.shape(), std::move(out), {a, b},
                [](std::span<const double> g,
                   std::span<std::vector<double>*> grads) {
                  for (auto* grad : grads) {
                    if (!grad) continue;
                    for (std::size_t i = 0; i < g.size(); ++i) (*grad)[i] += g[i];
                  }
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return record(a.shape(), std::move(out), {a, b},
                [](std::span<const double> g,
                   std::span<std::vector<double>*> grads) {
                  if (grads[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                  }
                  if (grads[1]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
                  }
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return record(a.shape(), std::move(out), {a, b},
                [a, b](std::span<const double> g,
                       std::span<std::vector<double>*> grads) {
                  auto x = a.values();
                  auto y = b.values();
                  if (grads[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * y[i];
                  }
                  if (grads[1]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] += g[i] * x[i];
                  }
                });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return record(a.shape(), std::move(out), {a},
                [factor](std::span<const double> g,
                         std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * factor;
                });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_row_bias");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  if (bias.numel() != cols) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) +
                         " does not match " + shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto b = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  }
  return record(a.shape(), std::move(out), {a, bias},
                [rows, cols](std::span<const double> g,
                             std::span<std::vector<double>*> grads) {
                  if (grads[0]) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                  }
                  if (grads[1]) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        (*grads[1])[c] += g[r * cols + c];
                      }
                    }
                  }
                });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  auto v = a.values();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  return record({1}, {total}, {a},
                [](std::span<const double> g,
                   std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  for (double& x : *grads[0]) x += g[0];
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " to " +
                         shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return record(std::move(shape), std::move(out), {a},
                [](std::span<const double> g,
                   std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  if (count == 0 || begin + count > cols) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) +
                         ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(a.shape()));
  }
  std::vector<double> out(rows * count);
  auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * cols + begin),
                count, out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  return record({rows, count}, std::move(out), {a},
                [rows, cols, begin, count](std::span<const double> g,
                                           std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  auto& ga = *grads[0];
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < count; ++c) {
                      ga[r * cols + begin + c] += g[r * count + c];
                    }
                  }
                });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  const std::size_t cols = a.dim(1);
  if (count == 0 || begin + count > a.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(a.shape()));
  }
  auto v = a.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          v.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return record({count, cols}, std::move(out), {a},
                [offset = begin * cols](std::span<const double> g,
                                        std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[offset + i] += g[i];
                });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& part : parts) {
    require_rank(part, 2, "concat_cols");
    if (part.dim(0) != rows) {
      throw DimensionError("concat_cols: row counts disagree");
    }
    widths.push_back(part.dim(1));
    total += part.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * widths[p]),
                  widths[p],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[p];
  }
  return record({rows, total}, std::move(out), parts,
                [rows, total, widths](std::span<const double> g,
                                      std::span<std::vector<double>*> grads) {
                  std::size_t offset = 0;
                  for (std::size_t p = 0; p < widths.size(); ++p) {
                    if (grads[p]) {
                      auto& gp = *grads[p];
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < widths[p]; ++c) {
                          gp[r * widths[p] + c] += g[r * total + offset + c];
                        }
                      }
                    }
                    offset += widths[p];
                  }
                });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("stack: no inputs");
  const Shape& inner = parts.front().shape();
  const std::size_t block = parts.front().numel();
  std::vector<double> out;
  out.reserve(block * parts.size());
  for (const Tensor& part : parts) {
    if (part.shape() != inner) throw DimensionError("stack: shapes disagree");
    out.insert(out.end(), part.values().begin(), part.values().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return record(std::move(shape), std::move(out), parts,
                [block](std::span<const double> g,
                        std::span<std::vector<double>*> grads) {
                  for (std::size_t p = 0; p < grads.size(); ++p) {
                    if (!grads[p]) continue;
                    for (std::size_t i = 0; i < block; ++i) {
                      (*grads[p])[i] += g[p * block + i];
                    }
                  }
                });
}

Tensor softmax_rows(const Tensor& a) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  std::vector<double> out(a.numel());
  auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* y = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - peak);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  std::vector<double> saved = out;
  return record(a.shape(), std::move(out), {a},
                [saved = std::move(saved), rows, cols](
                    std::span<const double> g,
                    std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  auto& ga = *grads[0];
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* y = saved.data() + r * cols;
                    const double* gy = g.data() + r * cols;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
                    for (std::size_t c = 0; c < cols; ++c) {
                      ga[r * cols + c] += y[c] * (gy[c] - dot);
                    }
                  }
                });
}

}  // namespace crnn
