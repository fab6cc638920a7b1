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

// Trainable layers: convolution, batch normalization, LSTM cells and
// (bi)directional recurrent layers, the Map-to-Sequence bridge and the
// per-frame class projection.

#ifndef CRNN_LAYERS_HPP_
#define CRNN_LAYERS_HPP_

#include <cstddef>
#include <random>
#include <vector>

#include "crnn/tensor.hpp"

namespace crnn {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

// LSTM without peepholes. Gate blocks along the 4H axis are ordered input,
// forget, output, candidate.
struct LstmCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor input_weights;   // [input_size x 4H]
  Tensor hidden_weights;  // [H x 4H]
  Tensor bias;            // [4H]; forget block starts at 1

  static LstmCell create(std::size_t input_size, std::size_t hidden_size,
                         std::mt19937_64& rng);
  std::size_t parameter_count() const;
  std::vector<Tensor> parameters() const;
};

struct RecurrentState {
  Tensor h;
  Tensor c;

  // Rank-1 [hidden] state when batch == 0, otherwise [batch x hidden].
  static RecurrentState zeros(std::size_t batch, std::size_t hidden);
};

// i, f, o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
// `x` is [input] with a rank-1 state, or [B x input] with [B x H] states.
RecurrentState lstm_step(const LstmCell& cell, const Tensor& x,
                         const RecurrentState& state);

// Runs the cell over `frames` from zero state and returns h_t for every t in
// input order. With `reverse`, frames are consumed from last to first, so
// output t summarises frames T-1 down to t.
std::vector<Tensor> lstm_layer(const LstmCell& cell,
                               const std::vector<Tensor>& frames,
                               bool reverse = false);

// Output t concatenates the forward state at t and the backward state at t.
std::vector<Tensor> bilstm_layer(const LstmCell& forward_cell,
                                 const LstmCell& backward_cell,
                                 const std::vector<Tensor>& frames);

// Feature maps [C x H x W] (or [N x C x H x W]) to W frames of width C*H
// (or [N x C*H]). Within a frame, channel blocks are contiguous and rows
// run fastest.
std::vector<Tensor> map_to_sequence(const Tensor& maps);

// Inverse of map_to_sequence.
Tensor sequence_to_map(const std::vector<Tensor>& frames, std::size_t channels,
                       std::size_t height);

class Conv2dLayer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel_h, std::size_t kernel_w, Conv2dParams params,
              std::mt19937_64& rng);

  Tensor forward(const Tensor& input) const;

  Tensor kernels;
  Tensor bias;
  Conv2dParams params;
};

class BatchNormLayer {
 public:
  explicit BatchNormLayer(std::size_t channels);

  Tensor forward(const Tensor& input, BatchNormMode mode);

  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

// Per-frame affine map x W + b.
class Linear {
 public:
  Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;

  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

}  // namespace crnn

#endif  // CRNN_LAYERS_HPP_
