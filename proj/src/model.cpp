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


#include "crnn/model.hpp"

#include <cctype>
#include <charconv>
#include <random>
#include <tuple>
#include <sstream>

#include "crnn/error.hpp"

namespace crnn {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view text, std::string_view token) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("bad number '" + std::string(text) + "' in layer '" +
                      std::string(token) + "'");
  }
  return value;
}

// "<h>x<w>"
std::pair<std::size_t, std::size_t> parse_pair(std::string_view text,
                                               std::string_view token) {
  const auto parts = split(text, 'x');
  if (parts.size() != 2) {
    throw ConfigError("expected <h>x<w> in layer '" + std::string(token) + "'");
  }
  return {parse_count(parts[0], token), parse_count(parts[1], token)};
}

std::string pair_text(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_conv_stage(LayerKind k) {
  return k == LayerKind::kConv || k == LayerKind::kBatchNorm ||
         k == LayerKind::kRelu || k == LayerKind::kMaxPool;
}

bool is_recurrent(LayerKind k) {
  return k == LayerKind::kLstm || k == LayerKind::kBiLstm;
}

// Spatial extent after the conv stage; throws DimensionError.
std::pair<std::size_t, std::size_t> conv_stage_extent(
    const std::vector<LayerSpec>& layers, std::size_t h, std::size_t w) {
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerKind::kConv) {
      h = conv_output_extent(h, l.kernel_h, l.stride_h, l.pad_h);
      w = conv_output_extent(w, l.kernel_w, l.stride_w, l.pad_w);
    } else if (l.kind == LayerKind::kMaxPool) {
      h = conv_output_extent(h, l.kernel_h, l.stride_h, 0);
      w = conv_output_extent(w, l.kernel_w, l.stride_w, 0);
    }
  }
  return {h, w};
}

}  // namespace

LayerSpec LayerSpec::conv(std::size_t maps, std::size_t kernel, std::size_t stride,
                          std::size_t pad) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.maps = maps;
  l.kernel_h = l.kernel_w = kernel;
  l.stride_h = l.stride_w = stride;
  l.pad_h = l.pad_w = pad;
  return l;
}

LayerSpec LayerSpec::pool(std::size_t window_h, std::size_t window_w,
                          std::size_t stride_h, std::size_t stride_w) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel_h = window_h;
  l.kernel_w = window_w;
  l.stride_h = stride_h;
  l.stride_w = stride_w;
  return l;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec l;
  l.kind = LayerKind::kBatchNorm;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::lstm(std::size_t hidden) {
  LayerSpec l;
  l.kind = LayerKind::kLstm;
  l.hidden = hidden;
  return l;
}

LayerSpec LayerSpec::bilstm(std::size_t hidden) {
  LayerSpec l;
  l.kind = LayerKind::kBiLstm;
  l.hidden = hidden;
  return l;
}

LayerSpec LayerSpec::projection() {
  LayerSpec l;
  l.kind = LayerKind::kProjection;
  return l;
}

std::string LayerSpec::to_string() const {
  switch (kind) {
    case LayerKind::kConv:
      return "conv:" + std::to_string(maps) + ":" + pair_text(kernel_h, kernel_w) +
             ":" + pair_text(stride_h, stride_w) + ":" + pair_text(pad_h, pad_w);
    case LayerKind::kMaxPool:
      return "pool:" + pair_text(kernel_h, kernel_w) + ":" + pair_text(stride_h, stride_w);
    case LayerKind::kBatchNorm:
      return "bn";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kLstm:
      return "lstm:" + std::to_string(hidden);
    case LayerKind::kBiLstm:
      return "bilstm:" + std::to_string(hidden);
    case LayerKind::kProjection:
      return "proj";
  }
  return {};
}

LayerSpec LayerSpec::parse(std::string_view token) {
  const auto f = split(token, ':');
  const std::string_view head = f[0];
  auto expect = [&](std::size_t n) {
    if (f.size() != n) {
      throw ConfigError("layer '" + std::string(token) + "' expects " +
                        std::to_string(n - 1) + " fields");
    }
  };
  if (head == "conv") {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    // conv:<maps>:<k> is shorthand for stride 1, same padding.
    if (f.size() == 3) {
      const std::size_t k = parse_count(f[2], token);
      l.maps = parse_count(f[1], token);
      l.kernel_h = l.kernel_w = k;
      l.pad_h = l.pad_w = k / 2;
      return l;
    }
    expect(5);
    l.maps = parse_count(f[1], token);
    std::tie(l.kernel_h, l.kernel_w) = parse_pair(f[2], token);
    std::tie(l.stride_h, l.stride_w) = parse_pair(f[3], token);
    std::tie(l.pad_h, l.pad_w) = parse_pair(f[4], token);
    return l;
  }
  if (head == "pool") {
    expect(3);
    const auto [wh, ww] = parse_pair(f[1], token);
    const auto [sh, sw] = parse_pair(f[2], token);
    return pool(wh, ww, sh, sw);
  }
  if (head == "bn") {
    expect(1);
    return batchnorm();
  }
  if (head == "relu") {
    expect(1);
    return relu();
  }
  if (head == "lstm") {
    expect(2);
    return lstm(parse_count(f[1], token));
  }
  if (head == "bilstm") {
    expect(2);
    return bilstm(parse_count(f[1], token));
  }
  if (head == "proj") {
    expect(1);
    return projection();
  }
  throw ConfigError("unknown layer '" + std::string(token) + "'");
}

std::string layers_to_string(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (const LayerSpec& l : layers) {
    if (!out.empty()) out += ' ';
    out += l.to_string();
  }
  return out;
}

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> out;
  std::istringstream in{std::string(text)};
  std::string token;
  while (in >> token) out.push_back(LayerSpec::parse(token));
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ModelConfig::validate() const {
  if (layers.empty()) throw ConfigError("layer list is empty");
  if (input_height == 0) throw ConfigError("input height must be positive");
  if (alphabet.size() == 0) throw ConfigError("alphabet is empty");
  for (char c : alphabet.symbols()) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '=') {
      throw ConfigError("alphabet symbols must be printable and not '='");
    }
  }
  std::size_t i = 0;
  bool seen_conv = false;
  for (; i < layers.size() && is_conv_stage(layers[i].kind); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::kConv) {
      if (l.maps == 0 || l.kernel_h == 0 || l.kernel_w == 0 || l.stride_h == 0 ||
          l.stride_w == 0) {
        throw ConfigError("conv layer " + std::to_string(i) + " has a zero extent");
      }
      seen_conv = true;
    } else if (l.kind == LayerKind::kMaxPool) {
      if (l.kernel_h == 0 || l.kernel_w == 0 || l.stride_h == 0 || l.stride_w == 0) {
        throw ConfigError("pool layer " + std::to_string(i) + " has a zero extent");
      }
    } else if (l.kind == LayerKind::kBatchNorm && !seen_conv) {
      throw ConfigError("batch-norm needs a preceding conv layer");
    }
  }
  if (!seen_conv) throw ConfigError("at least one conv layer is required");
  for (; i < layers.size() && is_recurrent(layers[i].kind); ++i) {
    if (layers[i].hidden == 0) throw ConfigError("recurrent layer with zero hidden size");
  }
  if (i != layers.size() - 1 || layers[i].kind != LayerKind::kProjection) {
    throw ConfigError(
        "layers must be conv-stage layers, then recurrent layers, then one proj");
  }
  std::size_t h = 0;
  try {
    // Width is irrelevant for the height check; pick one that surely fits.
    h = conv_stage_extent(layers, input_height, 1 << 16).first;
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("conv stage rejects input height: ") + e.what());
  }
  if (h != 1) {
    throw ConfigError("conv stage maps height " + std::to_string(input_height) +
                      " to " + std::to_string(h) + ", expected 1");
  }
}

std::string ModelConfig::canonical_text() const {
  std::string out;
  out += "input_height=" + std::to_string(input_height) + "\n";
  out += "alphabet=" + alphabet.symbols() + "\n";
  out += std::string("fold_case=") + (alphabet.fold_case() ? "1" : "0") + "\n";
  out += "layers=" + layers_to_string(layers) + "\n";
  return out;
}

std::uint64_t ModelConfig::digest() const { return fnv1a64(canonical_text()); }

ModelConfig ModelConfig::from_canonical_text(std::string_view text) {
  std::string symbols;
  bool fold = false;
  ModelConfig c;
  bool have_layers = false, have_alphabet = false;
  for (std::string_view line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("malformed config line '" + std::string(line) + "'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "input_height") {
      c.input_height = parse_count(value, line);
    } else if (key == "alphabet") {
      symbols = std::string(value);
      have_alphabet = true;
    } else if (key == "fold_case") {
      fold = value == "1";
    } else if (key == "layers") {
      c.layers = parse_layers(value);
      have_layers = true;
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
  }
  if (!have_layers || !have_alphabet) throw ConfigError("config lacks layers or alphabet");
  c.alphabet = Alphabet(symbols, fold);
  if (c.layers == preset_standard(c.alphabet).layers) {
    c.preset = "standard";
  } else if (c.layers == preset_simplified(c.alphabet).layers) {
    c.preset = "simplified";
  }
  c.validate();
  return c;
}

std::size_t ModelConfig::conv_layer_count() const {
  std::size_t n = 0;
  for (const LayerSpec& l : layers) n += l.kind == LayerKind::kConv;
  return n;
}

ModelConfig preset_standard(Alphabet alphabet) {
  using L = LayerSpec;
  ModelConfig c;
  c.preset = "standard";
  c.alphabet = std::move(alphabet);
  c.layers = {
      L::conv(64, 3, 1, 1),  L::relu(), L::pool(2, 2, 2, 2),
      L::conv(128, 3, 1, 1), L::relu(), L::pool(2, 2, 2, 2),
      L::conv(256, 3, 1, 1), L::relu(),
      L::conv(256, 3, 1, 1), L::relu(), L::pool(2, 1, 2, 1),
      L::conv(512, 3, 1, 1), L::batchnorm(), L::relu(),
      L::conv(512, 3, 1, 1), L::batchnorm(), L::relu(), L::pool(2, 1, 2, 1),
      L::conv(512, 2, 1, 0), L::relu(),
      L::bilstm(256), L::bilstm(256),
      L::projection(),
  };
  return c;
}

ModelConfig preset_simplified(Alphabet alphabet) {
  using L = LayerSpec;
  ModelConfig c;
  c.preset = "simplified";
  c.alphabet = std::move(alphabet);
  c.layers = {
      L::conv(64, 3, 1, 1),  L::relu(), L::pool(2, 2, 2, 2),
      L::conv(128, 3, 1, 1), L::relu(), L::pool(2, 2, 2, 2),
      L::conv(256, 3, 1, 1), L::relu(), L::pool(2, 1, 2, 1),
      L::conv(512, 3, 1, 1), L::batchnorm(), L::relu(), L::pool(2, 1, 2, 1),
      L::conv(512, 2, 1, 0), L::relu(),
      L::lstm(256), L::lstm(256),
      L::projection(),
  };
  return c;
}

ModelConfig preset_by_name(std::string_view name, Alphabet alphabet) {
  if (name == "standard") return preset_standard(std::move(alphabet));
  if (name == "simplified") return preset_simplified(std::move(alphabet));
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  std::size_t channels = 1;
  std::size_t features = 0;
  for (const LayerSpec& l : config_.layers) {
    switch (l.kind) {
      case LayerKind::kConv:
        stages_.emplace_back(Conv2dLayer(
            channels, l.maps, l.kernel_h, l.kernel_w,
            Conv2dParams{l.stride_h, l.stride_w, l.pad_h, l.pad_w}, rng));
        channels = l.maps;
        break;
      case LayerKind::kBatchNorm: {
        BatchNormLayer bn(channels);
        // Untrained models still run inference: start from the identity
        // statistics.
        bn.stats.running_mean.assign(channels, 0.0);
        bn.stats.running_var.assign(channels, 1.0);
        bn.stats.initialized = true;
        stages_.emplace_back(std::move(bn));
        break;
      }
      case LayerKind::kRelu:
        stages_.emplace_back(ReluStage{});
        break;
      case LayerKind::kMaxPool:
        stages_.emplace_back(
            PoolStage{Pool2dParams{l.kernel_h, l.kernel_w, l.stride_h, l.stride_w}});
        break;
      case LayerKind::kLstm:
        if (features == 0) {
          features = channels;
          first_recurrent_ = stages_.size();
        }
        stages_.emplace_back(LstmCell::create(features, l.hidden, rng));
        features = l.hidden;
        break;
      case LayerKind::kBiLstm: {
        if (features == 0) {
          features = channels;
          first_recurrent_ = stages_.size();
        }
        LstmCell f = LstmCell::create(features, l.hidden, rng);
        LstmCell b = LstmCell::create(features, l.hidden, rng);
        stages_.emplace_back(BiLstmStage{std::move(f), std::move(b)});
        features = 2 * l.hidden;
        break;
      }
      case LayerKind::kProjection:
        if (features == 0) {
          features = channels;
          first_recurrent_ = stages_.size();
        }
        stages_.emplace_back(Linear(features, num_classes(), rng));
        break;
    }
  }
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_cell = [&](const std::string& prefix, const LstmCell& cell) {
    out.emplace_back(prefix + ".input_weights", cell.input_weights);
    out.emplace_back(prefix + ".hidden_weights", cell.hidden_weights);
    out.emplace_back(prefix + ".bias", cell.bias);
  };
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "layer" + std::to_string(i);
    const Stage& s = stages_[i];
    if (auto* c = std::get_if<Conv2dLayer>(&s)) {
      out.emplace_back(p + ".kernels", c->kernels);
      out.emplace_back(p + ".bias", c->bias);
    } else if (auto* b = std::get_if<BatchNormLayer>(&s)) {
      out.emplace_back(p + ".gamma", b->gamma);
      out.emplace_back(p + ".beta", b->beta);
    } else if (auto* cell = std::get_if<LstmCell>(&s)) {
      add_cell(p, *cell);
    } else if (auto* bi = std::get_if<BiLstmStage>(&s)) {
      add_cell(p + ".fwd", bi->forward);
      add_cell(p + ".bwd", bi->backward);
    } else if (auto* lin = std::get_if<Linear>(&s)) {
      out.emplace_back(p + ".weight", lin->weight);
      out.emplace_back(p + ".bias", lin->bias);
    }
  }
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

std::vector<std::pair<std::string, std::vector<double>*>> Model::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (auto* b = std::get_if<BatchNormLayer>(&stages_[i])) {
      const std::string p = "layer" + std::to_string(i);
      out.emplace_back(p + ".running_mean", &b->stats.running_mean);
      out.emplace_back(p + ".running_var", &b->stats.running_var);
    }
  }
  return out;
}

std::size_t Model::frames_for_width(std::size_t width) const {
  const auto [h, w] = conv_stage_extent(config_.layers, config_.input_height, width);
  (void)h;
  return w;
}

std::size_t Model::min_width() const {
  for (std::size_t w = 1; w <= 4096; ++w) {
    try {
      frames_for_width(w);
      return w;
    } catch (const DimensionError&) {
    }
  }
  throw ConfigError("no input width up to 4096 fits the conv stage");
}

Tensor Model::conv_features(const Tensor& images) {
  Tensor x = images;
  if (x.rank() == 3) x = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != config_.input_height) {
    throw DimensionError("expected images [N x 1 x " +
                         std::to_string(config_.input_height) + " x W]");
  }
  const std::size_t width = x.dim(3);
  if (width < min_width()) {
    throw DimensionError("input width " + std::to_string(width) +
                         " is below the minimum of " + std::to_string(min_width()));
  }
  const BatchNormMode mode = training_ ? BatchNormMode::kTrain : BatchNormMode::kInfer;
  for (std::size_t i = 0; i < first_recurrent_; ++i) {
    Stage& s = stages_[i];
    if (auto* c = std::get_if<Conv2dLayer>(&s)) {
      x = c->forward(x);
    } else if (auto* b = std::get_if<BatchNormLayer>(&s)) {
      x = b->forward(x, mode);
    } else if (std::holds_alternative<ReluStage>(s)) {
      x = relu(x);
    } else if (auto* p = std::get_if<PoolStage>(&s)) {
      x = maxpool2d(x, p->params);
    }
  }
  return x;
}

Tensor Model::logits(const Tensor& images) {
  const Tensor maps = conv_features(images);
  const std::size_t batch = maps.dim(0);
  std::vector<Tensor> frames = map_to_sequence(maps);
  for (std::size_t i = first_recurrent_; i < stages_.size(); ++i) {
    Stage& s = stages_[i];
    if (auto* cell = std::get_if<LstmCell>(&s)) {
      frames = lstm_layer(*cell, frames);
    } else if (auto* bi = std::get_if<BiLstmStage>(&s)) {
      frames = bilstm_layer(bi->forward, bi->backward, frames);
    } else if (auto* lin = std::get_if<Linear>(&s)) {
      // One GEMM over every frame of every sample.
      const std::size_t t = frames.size();
      const std::size_t feat = frames[0].dim(1);
      Tensor all = reshape(stack(frames), {t * batch, feat});
      return reshape(lin->forward(all), {t, batch, num_classes()});
    }
  }
  throw StateError("model has no projection layer");
}

std::vector<FrameDistributions> Model::forward_batch(const Tensor& images) {
  NoGradGuard guard;
  const bool was_training = training_;
  training_ = false;
  Tensor z;
  try {
    z = logits(images);
  } catch (...) {
    training_ = was_training;
    throw;
  }
  training_ = was_training;
  const std::size_t t = z.dim(0), n = z.dim(1), k = z.dim(2);
  std::vector<FrameDistributions> out;
  out.reserve(n);
  std::vector<double> acts(t * k);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t f = 0; f < t; ++f) {
      for (std::size_t c = 0; c < k; ++c) acts[f * k + c] = z.values()[(f * n + s) * k + c];
    }
    out.push_back(FrameDistributions::from_activations(t, k, acts));
  }
  return out;
}

FrameDistributions Model::forward(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("expected one image [1 x H x W]");
  return forward_batch(image).front();
}

}  // namespace crnn
