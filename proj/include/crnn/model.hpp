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

// Model configuration, presets, and the assembled convolutional-recurrent
// network: conv stack -> Map-to-Sequence -> recurrent layers -> per-frame
// class projection.

#ifndef CRNN_MODEL_HPP_
#define CRNN_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "crnn/ctc.hpp"
#include "crnn/layers.hpp"
#include "crnn/tensor.hpp"

namespace crnn {

enum class LayerKind { kConv, kBatchNorm, kRelu, kMaxPool, kLstm, kBiLstm, kProjection };

// One entry of the layer stack. Extents are written height-first.
//   conv:<maps>:<kh>x<kw>:<sh>x<sw>:<ph>x<pw>   pool:<wh>x<ww>:<sh>x<sw>
//   bn   relu   lstm:<hidden>   bilstm:<hidden>   proj
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t maps = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t hidden = 0;

  static LayerSpec conv(std::size_t maps, std::size_t kernel, std::size_t stride,
                        std::size_t pad);
  static LayerSpec pool(std::size_t window_h, std::size_t window_w,
                        std::size_t stride_h, std::size_t stride_w);
  static LayerSpec batchnorm();
  static LayerSpec relu();
  static LayerSpec lstm(std::size_t hidden);
  static LayerSpec bilstm(std::size_t hidden);
  static LayerSpec projection();

  std::string to_string() const;
  static LayerSpec parse(std::string_view token);

  bool operator==(const LayerSpec&) const = default;
};

std::string layers_to_string(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> parse_layers(std::string_view text);

struct ModelConfig {
  std::string preset = "custom";
  std::vector<LayerSpec> layers;
  std::size_t input_height = 32;
  Alphabet alphabet = Alphabet::alphanumeric();

  // Throws ConfigError unless the stack is conv-stage layers, then recurrent
  // layers, then exactly one projection, and the conv stage reduces
  // `input_height` to exactly 1.
  void validate() const;

  // Text covering everything that determines parameter shapes; the digest
  // is its 64-bit FNV-1a hash.
  std::string canonical_text() const;
  std::uint64_t digest() const;
  static ModelConfig from_canonical_text(std::string_view text);

  std::size_t conv_layer_count() const;
};

std::uint64_t fnv1a64(std::string_view bytes);

// The full network: 7 conv layers (64, 128, 256, 256, 512, 512, 512 maps),
// square pools after conv1/conv2, height-only pools after conv4/conv6,
// batch-norm after conv5/conv6, then two bidirectional LSTM layers of 256.
ModelConfig preset_standard(Alphabet alphabet = Alphabet::alphanumeric());
// The standard stack without conv4 and conv6 and with two unidirectional
// LSTM layers.
ModelConfig preset_simplified(Alphabet alphabet = Alphabet::alphanumeric());
// "standard" or "simplified"; ConfigError otherwise.
ModelConfig preset_by_name(std::string_view name,
                           Alphabet alphabet = Alphabet::alphanumeric());

class Model {
 public:
  // Builds and initializes all layers from `seed`. Throws ConfigError for an
  // invalid config.
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t num_classes() const { return config_.alphabet.num_classes(); }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  std::size_t parameter_count() const;
  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Batch-norm running statistics.
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();

  // Number of frames for an input of the given width; DimensionError when
  // the conv stack cannot process it.
  std::size_t frames_for_width(std::size_t width) const;
  std::size_t min_width() const;

  // Raw class scores [T x N x K] for images [N x 1 x H x W] (or [1 x H x W]),
  // recorded on the autodiff graph. Batch-norm follows the current mode.
  Tensor logits(const Tensor& images);

  // Output of the conv stage, [N x C x 1 x T], before Map-to-Sequence.
  Tensor conv_features(const Tensor& images);

  // Inference: per-frame distributions for one [1 x H x W] image.
  FrameDistributions forward(const Tensor& image);
  std::vector<FrameDistributions> forward_batch(const Tensor& images);

 private:
  struct PoolStage {
    Pool2dParams params;
  };
  struct ReluStage {};
  struct BiLstmStage {
    LstmCell forward;
    LstmCell backward;
  };
  using Stage = std::variant<Conv2dLayer, BatchNormLayer, ReluStage, PoolStage,
                             LstmCell, BiLstmStage, Linear>;

  ModelConfig config_;
  std::vector<Stage> stages_;
  std::size_t first_recurrent_ = 0;
  bool training_ = false;
};

}  // namespace crnn

#endif  // CRNN_MODEL_HPP_
