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

#include "crnn/layers.hpp"

#include <cmath>
#include <string>

#include "crnn/error.hpp"

namespace crnn {

namespace {

// Gate pre-activations z = gates_input + h W_h, split into the four blocks.
RecurrentState lstm_update(const LstmCell& cell, const Tensor& gates_input,
                           const RecurrentState& state) {
  const std::size_t hidden = cell.hidden_size;
  Tensor z = add(gates_input, matmul(state.h, cell.hidden_weights));
  Tensor gates = sigmoid(slice_cols(z, 0, 3 * hidden));
  Tensor input_gate = slice_cols(gates, 0, hidden);
  Tensor forget_gate = slice_cols(gates, hidden, hidden);
  Tensor output_gate = slice_cols(gates, 2 * hidden, hidden);
  Tensor candidate = tanh(slice_cols(z, 3 * hidden, hidden));
  Tensor c = add(mul(forget_gate, state.c), mul(input_gate, candidate));
  Tensor h = mul(output_gate, tanh(c));
  return {h, c};
}

void check_frames(const std::vector<Tensor>& frames, std::size_t width,
                  const char* op) {
  if (frames.empty()) throw UsageError(std::string(op) + ": empty sequence");
  const Shape& first = frames.front().shape();
  for (const Tensor& f : frames) {
    if (f.shape() != first) {
      throw DimensionError(std::string(op) + ": frames have differing shapes");
    }
  }
  if (first.empty() || first.size() > 2 || first.back() != width) {
    throw DimensionError(std::string(op) + ": frame shape " + shape_string(first) +
                         " does not match input size " + std::to_string(width));
  }
}

}  // namespace

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

LstmCell LstmCell::create(std::size_t input_size, std::size_t hidden_size,
                          std::mt19937_64& rng) {
  if (input_size == 0 || hidden_size == 0) {
    throw DimensionError("LSTM sizes must be positive");
  }
  LstmCell cell;
  cell.input_size = input_size;
  cell.hidden_size = hidden_size;
  cell.input_weights =
      glorot_uniform({input_size, 4 * hidden_size}, input_size, hidden_size, rng);
  cell.hidden_weights =
      glorot_uniform({hidden_size, 4 * hidden_size}, hidden_size, hidden_size, rng);
  std::vector<double> bias(4 * hidden_size, 0.0);
  std::fill_n(bias.begin() + static_cast<std::ptrdiff_t>(hidden_size), hidden_size, 1.0);
  cell.bias = Tensor({4 * hidden_size}, std::move(bias), true);
  return cell;
}

std::size_t LstmCell::parameter_count() const {
  return 4 * (input_size * hidden_size + hidden_size * hidden_size + hidden_size);
}

std::vector<Tensor> LstmCell::parameters() const {
  return {input_weights, hidden_weights, bias};
}

RecurrentState RecurrentState::zeros(std::size_t batch, std::size_t hidden) {
  if (batch == 0) return {Tensor({hidden}), Tensor({hidden})};
  return {Tensor({batch, hidden}), Tensor({batch, hidden})};
}

RecurrentState lstm_step(const LstmCell& cell, const Tensor& x,
                         const RecurrentState& state) {
  const std::size_t hidden = cell.hidden_size;
  const bool single = x.rank() == 1;
  if ((x.rank() != 1 && x.rank() != 2) || x.shape().back() != cell.input_size) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) +
                         " does not match input size " +
                         std::to_string(cell.input_size));
  }
  const std::size_t batch = single ? 1 : x.dim(0);
  const Shape expected = single ? Shape{hidden} : Shape{batch, hidden};
  if (state.h.shape() != expected || state.c.shape() != expected) {
    throw DimensionError("lstm_step: state " + shape_string(state.h.shape()) +
                         " does not match " + shape_string(expected));
  }
  if (!single) {
    return lstm_update(cell, add_row_bias(matmul(x, cell.input_weights), cell.bias),
                       state);
  }
  RecurrentState batched{reshape(state.h, {1, hidden}), reshape(state.c, {1, hidden})};
  Tensor x2 = reshape(x, {1, cell.input_size});
  RecurrentState next = lstm_update(
      cell, add_row_bias(matmul(x2, cell.input_weights), cell.bias), batched);
  return {reshape(next.h, {hidden}), reshape(next.c, {hidden})};
}

std::vector<Tensor> lstm_layer(const LstmCell& cell, const std::vector<Tensor>& frames,
                               bool reverse) {
  check_frames(frames, cell.input_size, "lstm_layer");
  const bool single = frames.front().rank() == 1;
  const std::size_t steps = frames.size();
  const std::size_t batch = single ? 1 : frames.front().dim(0);

  // One GEMM for the input projection of every frame.
  Tensor projected = add_row_bias(
      matmul(reshape(stack(frames), {steps * batch, cell.input_size}),
             cell.input_weights),
      cell.bias);

  RecurrentState state = RecurrentState::zeros(batch, cell.hidden_size);
  std::vector<Tensor> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    state = lstm_update(cell, slice_rows(projected, t * batch, batch), state);
    outputs[t] = single ? reshape(state.h, {cell.hidden_size}) : state.h;
  }
  return outputs;
}

std::vector<Tensor> bilstm_layer(const LstmCell& forward_cell,
                                 const LstmCell& backward_cell,
                                 const std::vector<Tensor>& frames) {
  if (forward_cell.input_size != backward_cell.input_size) {
    throw DimensionError("bilstm_layer: cells disagree on input size");
  }
  const auto fwd = lstm_layer(forward_cell, frames, false);
  const auto bwd = lstm_layer(backward_cell, frames, true);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (fwd[t].rank() == 1) {
      const std::size_t width = forward_cell.hidden_size + backward_cell.hidden_size;
      out.push_back(reshape(
          concat_cols({reshape(fwd[t], {1, forward_cell.hidden_size}),
                       reshape(bwd[t], {1, backward_cell.hidden_size})}),
          {width}));
    } else {
      out.push_back(concat_cols({fwd[t], bwd[t]}));
    }
  }
  return out;
}

std::vector<Tensor> map_to_sequence(const Tensor& maps) {
  if (maps.rank() != 3 && maps.rank() != 4) {
    throw DimensionError("map_to_sequence: expected [C,H,W] or [N,C,H,W], got " +
                         shape_string(maps.shape()));
  }
  const bool batched = maps.rank() == 4;
  const std::size_t n = batched ? maps.dim(0) : 1;
  const std::size_t c = maps.dim(batched ? 1 : 0);
  const std::size_t h = maps.dim(batched ? 2 : 1);
  const std::size_t w = maps.dim(batched ? 3 : 2);
  const std::size_t depth = c * h;
  auto v = maps.values();

  std::vector<Tensor> frames;
  frames.reserve(w);
  for (std::size_t col = 0; col < w; ++col) {
    std::vector<double> frame(n * depth);
    for (std::size_t img = 0; img < n; ++img) {
      for (std::size_t k = 0; k < depth; ++k) {
        frame[img * depth + k] = v[(img * depth + k) * w + col];
      }
    }
    Shape shape = batched ? Shape{n, depth} : Shape{depth};
    frames.push_back(record(
        std::move(shape), std::move(frame), {maps},
        [n, depth, w, col](std::span<const double> g,
                           std::span<std::vector<double>*> grads) {
          if (!grads[0]) return;
          for (std::size_t img = 0; img < n; ++img) {
            for (std::size_t k = 0; k < depth; ++k) {
              (*grads[0])[(img * depth + k) * w + col] += g[img * depth + k];
            }
          }
        }));
  }
  return frames;
}

Tensor sequence_to_map(const std::vector<Tensor>& frames, std::size_t channels,
                       std::size_t height) {
  if (frames.empty()) throw UsageError("sequence_to_map: empty sequence");
  const std::size_t depth = channels * height;
  check_frames(frames, depth, "sequence_to_map");
  const bool batched = frames.front().rank() == 2;
  const std::size_t n = batched ? frames.front().dim(0) : 1;
  const std::size_t w = frames.size();
  std::vector<double> out(n * depth * w);
  for (std::size_t col = 0; col < w; ++col) {
    auto f = frames[col].values();
    for (std::size_t img = 0; img < n; ++img) {
      for (std::size_t k = 0; k < depth; ++k) {
        out[(img * depth + k) * w + col] = f[img * depth + k];
      }
    }
  }
  Shape shape = batched ? Shape{n, channels, height, w} : Shape{channels, height, w};
  return record(std::move(shape), std::move(out), frames,
                [n, depth, w](std::span<const double> g,
                              std::span<std::vector<double>*> grads) {
                  for (std::size_t col = 0; col < w; ++col) {
                    if (!grads[col]) continue;
                    for (std::size_t img = 0; img < n; ++img) {
                      for (std::size_t k = 0; k < depth; ++k) {
                        (*grads[col])[img * depth + k] += g[(img * depth + k) * w + col];
                      }
                    }
                  }
                });
}

Conv2dLayer::Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
                         std::size_t kernel_h, std::size_t kernel_w,
                         Conv2dParams conv_params, std::mt19937_64& rng)
    : kernels(glorot_uniform({out_channels, in_channels, kernel_h, kernel_w},
                             in_channels * kernel_h * kernel_w,
                             out_channels * kernel_h * kernel_w, rng)),
      bias(Tensor::zeros({out_channels}, true)),
      params(conv_params) {}

Tensor Conv2dLayer::forward(const Tensor& input) const {
  return conv2d(input, kernels, bias, params);
}

BatchNormLayer::BatchNormLayer(std::size_t channels)
    : gamma(Tensor({channels}, std::vector<double>(channels, 1.0), true)),
      beta(Tensor::zeros({channels}, true)) {}

Tensor BatchNormLayer::forward(const Tensor& input, BatchNormMode mode) {
  return batchnorm(input, gamma, beta, stats, mode);
}

Linear::Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng)
    : weight(glorot_uniform({in_features, out_features}, in_features, out_features, rng)),
      bias(Tensor::zeros({out_features}, true)) {}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 1) {
    return reshape(add_row_bias(matmul(reshape(x, {1, x.dim(0)}), weight), bias),
                   {weight.dim(1)});
  }
  return add_row_bias(matmul(x, weight), bias);
}

}  // namespace crnn
