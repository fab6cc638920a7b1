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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "crnn/checkpoint.hpp"
#include "crnn/decode.hpp"
#include "crnn/error.hpp"
#include "test_util.hpp"

namespace crnn {
namespace {

namespace fs = std::filesystem;
using testing::gradient_relative_error;
using testing::random_tensor;

ModelConfig toy_config() {
  ModelConfig c;
  c.input_height = 4;
  c.alphabet = Alphabet("012");
  c.layers = parse_layers(
      "conv:2:3x3:1x1:1x1 bn relu pool:2x2:2x2 conv:3:2x2:1x1:0x0 relu lstm:3 proj");
  return c;
}

// Written out by hand from the layer table: weights + biases per conv,
// gamma + beta per batch-norm, 4 gates x (input + hidden + bias) per LSTM
// direction, and the class projection.
std::size_t standard_count_by_hand(std::size_t classes) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) {
    return in * out * k * k + out;
  };
  auto lstm = [](std::size_t in, std::size_t h) { return 4 * (in * h + h * h + h); };
  std::size_t n = conv(1, 64, 3) + conv(64, 128, 3) + conv(128, 256, 3) +
                  conv(256, 256, 3) + conv(256, 512, 3) + conv(512, 512, 3) +
                  conv(512, 512, 2);
  n += 2 * (2 * 512);
  n += 2 * lstm(512, 256) + 2 * lstm(512, 256);
  n += 512 * classes + classes;
  return n;
}

Tensor background(std::size_t height, std::size_t width, double value = -0.5) {
  return Tensor({1, height, width}, std::vector<double>(height * width, value));
}

// Random content in columns [left, left + span).
Tensor with_content(std::size_t height, std::size_t width, std::size_t left,
                    std::size_t span, std::uint64_t seed) {
  Tensor img = background(height, width);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = left; c < left + span; ++c) img.values()[r * width + c] = u(rng);
  }
  return img;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("crnn_model_test_" + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(Presets, StandardParameterCountMatchesHandCount) {
  Model m(preset_standard(), 1);
  EXPECT_EQ(m.num_classes(), 37u);
  EXPECT_EQ(m.parameter_count(), standard_count_by_hand(37));
  EXPECT_GE(m.parameter_count(), 7.5e6);
  EXPECT_LE(m.parameter_count(), 9.1e6);
}

TEST(Presets, ConvLayerCounts) {
  EXPECT_EQ(preset_standard().conv_layer_count(), 7u);
  EXPECT_EQ(preset_simplified().conv_layer_count(), 5u);
  EXPECT_NO_THROW(preset_standard().validate());
  EXPECT_NO_THROW(preset_simplified().validate());
}

TEST(Presets, ByName) {
  EXPECT_EQ(preset_by_name("standard").layers, preset_standard().layers);
  EXPECT_EQ(preset_by_name("simplified").layers, preset_simplified().layers);
  EXPECT_THROW(preset_by_name("huge"), ConfigError);
}

TEST(Presets, SimplifiedHasOneBatchNormAndUnidirectionalLstms) {
  const ModelConfig c = preset_simplified();
  std::size_t bn = 0, pools = 0, lstm = 0;
  for (const LayerSpec& l : c.layers) {
    bn += l.kind == LayerKind::kBatchNorm;
    pools += l.kind == LayerKind::kMaxPool;
    lstm += l.kind == LayerKind::kLstm;
    EXPECT_NE(l.kind, LayerKind::kBiLstm);
  }
  EXPECT_EQ(bn, 1u);
  EXPECT_EQ(pools, 4u);
  EXPECT_EQ(lstm, 2u);
}

TEST(ShapeLaw, HundredPixelsGiveTwentyFourFrames) {
  Model m(preset_standard(), 1);
  EXPECT_EQ(m.frames_for_width(100), 24u);
  EXPECT_EQ(m.frames_for_width(104), 25u);
  EXPECT_EQ(m.min_width(), 8u);
}

TEST(ShapeLaw, FramesFollowQuarterWidthMinusOne) {
  for (auto config : {preset_standard(), preset_simplified()}) {
    Model m(config, 1);
    for (std::size_t w = 8; w <= 400; ++w) {
      EXPECT_EQ(m.frames_for_width(w), w / 4 - 1) << config.preset << " W=" << w;
    }
    for (std::size_t w = 1; w < 8; ++w) {
      EXPECT_THROW(m.frames_for_width(w), DimensionError);
    }
  }
}

TEST(Forward, StandardOn100x32) {
  Model m(preset_standard(), 3);
  const FrameDistributions y = m.forward(with_content(32, 100, 10, 80, 4));
  EXPECT_EQ(y.frames(), 24u);
  EXPECT_EQ(y.classes(), 37u);
  for (std::size_t t = 0; t < y.frames(); ++t) {
    double s = 0;
    for (std::size_t k = 0; k < y.classes(); ++k) s += y(t, k);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Forward, SimplifiedOn100x32) {
  Model m(preset_simplified(), 3);
  const FrameDistributions y = m.forward(with_content(32, 100, 10, 80, 4));
  EXPECT_EQ(y.frames(), 24u);
  EXPECT_EQ(y.classes(), 37u);
}

TEST(Forward, UndersizedOrWrongHeightIsDimensionError) {
  Model m(preset_simplified(), 3);
  EXPECT_THROW(m.forward(background(32, 7)), DimensionError);
  EXPECT_THROW(m.forward(background(31, 100)), DimensionError);
  EXPECT_NO_THROW(m.forward(background(32, 8)));
}

TEST(Forward, SingleConvAndProjectionOnOnePixel) {
  ModelConfig c;
  c.input_height = 1;
  c.alphabet = Alphabet("ab");
  c.layers = parse_layers("conv:4:1x1:1x1:0x0 proj");
  Model m(c, 5);
  const FrameDistributions y = m.forward(Tensor({1, 1, 1}, {0.25}));
  EXPECT_EQ(y.frames(), 1u);
  EXPECT_EQ(y.classes(), 3u);
}

TEST(Forward, BatchMatchesSingleImages) {
  Model m(preset_simplified(), 8);
  Tensor a = with_content(32, 40, 4, 30, 1);
  Tensor b = with_content(32, 40, 6, 20, 2);
  std::vector<double> both(a.values().begin(), a.values().end());
  both.insert(both.end(), b.values().begin(), b.values().end());
  const auto ys = m.forward_batch(Tensor({2, 1, 32, 40}, both));
  ASSERT_EQ(ys.size(), 2u);
  const auto ya = m.forward(a);
  const auto yb = m.forward(b);
  for (std::size_t i = 0; i < ya.data().size(); ++i) {
    EXPECT_NEAR(ys[0].data()[i], ya.data()[i], 1e-12);
    EXPECT_NEAR(ys[1].data()[i], yb.data()[i], 1e-12);
  }
}

TEST(Forward, InferenceLeavesTrainingFlagAndStatsAlone) {
  Model m(toy_config(), 2);
  m.set_training(true);
  auto buffers = m.named_buffers();
  const std::vector<double> before = *buffers[0].second;
  m.forward(with_content(4, 12, 2, 8, 3));
  EXPECT_TRUE(m.training());
  EXPECT_EQ(*buffers[0].second, before);
}

TEST(Translation, ConvFeaturesShiftByOneFramePerFourPixels) {
  Model m(preset_standard(), 11);
  NoGradGuard guard;
  const std::size_t w = 160;
  const Tensor a = m.conv_features(with_content(32, w, 60, 36, 9));
  const Tensor b = m.conv_features(with_content(32, w, 64, 36, 9));
  const std::size_t c = a.dim(1), t = a.dim(3);
  ASSERT_EQ(t, w / 4 - 1);
  // Frames whose receptive fields stay clear of both image borders.
  for (std::size_t f = 8; f + 9 < t; ++f) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      ASSERT_NEAR(a.values()[ch * t + f], b.values()[ch * t + f + 1], 1e-9)
          << "frame " << f << " channel " << ch;
    }
  }
}

double worst_shift_error(Model& m, std::size_t w, std::size_t margin) {
  const FrameDistributions a = m.forward(with_content(32, w, w / 2 - 4, 8, 21));
  const FrameDistributions b = m.forward(with_content(32, w, w / 2, 8, 21));
  double worst = 0;
  for (std::size_t f = margin; f + margin + 1 < a.frames(); ++f) {
    for (std::size_t k = 0; k < a.classes(); ++k) {
      worst = std::max(worst, std::abs(a(f, k) - b(f + 1, k)));
    }
  }
  return worst;
}

TEST(Translation, FrameLocalHeadShiftsExactly) {
  ModelConfig c = preset_standard();
  std::erase_if(c.layers, [](const LayerSpec& l) { return l.kind == LayerKind::kBiLstm; });
  Model m(c, 12);
  EXPECT_LE(worst_shift_error(m, 160, 8), 1e-5);
}

// Recurrent layers carry state across the whole line, so one extra leading
// background frame is only forgotten gradually. The residual is bounded,
// not zero.
TEST(Translation, RecurrentPresetsShiftApproximately) {
  for (auto config : {preset_standard(), preset_simplified()}) {
    Model m(config, 12);
    EXPECT_LE(worst_shift_error(m, 400, 8), 1e-3) << config.preset;
  }
}

TEST(Gradients, ToyModelThroughCtcLoss) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Model m(toy_config(), 100 + trial);
    m.set_training(true);
    const Tensor images = random_tensor(rng, {2, 1, 4, 12}, -0.5, 0.5, false);
    const std::vector<LabelSequence> labels = {{1, 2}, {3}};
    auto f = [&] { return ctc_batch_loss(m.logits(images), labels); };
    // Running statistics move on every forward; restore them so finite
    // differences see the same model.
    auto buffers = m.named_buffers();
    std::vector<std::vector<double>> saved;
    for (auto& [name, v] : buffers) saved.push_back(*v);
    auto g = [&] {
      for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = saved[i];
      return f();
    };
    EXPECT_LE(gradient_relative_error(g, m.parameters()), 1e-5) << "trial " << trial;
  }
}

TEST(Config, RejectsHeightNotReducedToOne) {
  ModelConfig c = preset_standard();
  c.input_height = 64;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(Model(c, 1), ConfigError);
}

TEST(Config, RejectsBadLayerOrder) {
  ModelConfig c = toy_config();
  c.layers = parse_layers("conv:2:3x3:1x1:1x1 relu pool:2x2:2x2 conv:3:2x2:1x1:0x0 lstm:3");
  EXPECT_THROW(c.validate(), ConfigError);
  c.layers = parse_layers("lstm:3 conv:2:3x3:1x1:1x1 pool:4x1:4x1 proj");
  EXPECT_THROW(c.validate(), ConfigError);
  c.layers = parse_layers("conv:2:4x1:1x1:0x0 proj lstm:3");
  EXPECT_THROW(c.validate(), ConfigError);
  c.layers.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c.layers = parse_layers("bn conv:2:4x1:1x1:0x0 proj");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, LayerTokensRoundTrip) {
  const ModelConfig c = preset_standard();
  EXPECT_EQ(parse_layers(layers_to_string(c.layers)), c.layers);
  EXPECT_EQ(LayerSpec::parse("conv:8:3"), LayerSpec::conv(8, 3, 1, 1));
  EXPECT_EQ(LayerSpec::parse("pool:2x1:2x1").to_string(), "pool:2x1:2x1");
  for (const char* bad : {"conv", "conv:a:3", "pool:2:2", "lstm", "gru:3", "proj:1",
                          "conv:8:3x3:1x1", "bilstm:-1"}) {
    EXPECT_THROW(LayerSpec::parse(bad), ConfigError) << bad;
  }
}

TEST(Config, CanonicalTextRoundTripAndDigest) {
  const ModelConfig c = preset_simplified();
  const ModelConfig back = ModelConfig::from_canonical_text(c.canonical_text());
  EXPECT_EQ(back.layers, c.layers);
  EXPECT_EQ(back.alphabet, c.alphabet);
  EXPECT_EQ(back.input_height, c.input_height);
  EXPECT_EQ(back.preset, "simplified");
  EXPECT_EQ(back.digest(), c.digest());
  EXPECT_NE(preset_standard().digest(), c.digest());
  EXPECT_NE(preset_standard(Alphabet::digits()).digest(), preset_standard().digest());
}

TEST(Config, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Checkpoint, RoundTripIsExactAtSinglePrecision) {
  Model m(preset_simplified(), 21);
  for (auto& [name, v] : m.named_buffers()) {
    for (double& x : *v) x += 0.125;
  }
  const fs::path p = temp_path("roundtrip.ckpt");
  CheckpointExtras extras{42, "adadelta", {{1.5, -2.25}, {3.0}}};
  save_checkpoint(m, p, extras);
  LoadedCheckpoint loaded = load_checkpoint(p, &m.config());
  EXPECT_EQ(loaded.extras.step, 42u);
  EXPECT_EQ(loaded.extras.optimizer, "adadelta");
  EXPECT_EQ(loaded.extras.optimizer_slots, extras.optimizer_slots);

  const auto a = m.named_parameters();
  const auto b = loaded.model.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].first, b[i].first);
    ASSERT_EQ(a[i].second.shape(), b[i].second.shape());
    for (std::size_t j = 0; j < a[i].second.numel(); ++j) {
      ASSERT_EQ(static_cast<float>(a[i].second.values()[j]),
                static_cast<float>(b[i].second.values()[j]));
      ASSERT_EQ(b[i].second.values()[j],
                static_cast<double>(static_cast<float>(b[i].second.values()[j])));
    }
  }
  const auto bufs = loaded.model.named_buffers();
  for (auto& [name, v] : bufs) {
    for (double x : *v) EXPECT_TRUE(x == 0.125 || x == 1.125) << name;
  }

  // Forward agreement and identical decodes over a fixed batch.
  for (std::uint64_t s = 0; s < 8; ++s) {
    const Tensor img = with_content(32, 100, 10, 80, s);
    const auto ya = m.forward(img);
    const auto yb = loaded.model.forward(img);
    for (std::size_t i = 0; i < ya.data().size(); ++i) {
      EXPECT_NEAR(ya.data()[i], yb.data()[i], 1e-4);
    }
  }
  // Saving the loaded model reproduces the file byte for byte.
  const fs::path q = temp_path("roundtrip2.ckpt");
  save_checkpoint(loaded.model, q, extras);
  EXPECT_EQ(slurp(p), slurp(q));
  fs::remove(p);
  fs::remove(q);
}

TEST(Checkpoint, ArgmaxDecodesSurviveRoundTrip) {
  Model m(preset_simplified(), 22);
  const fs::path p = temp_path("decode.ckpt");
  save_checkpoint(m, p);
  LoadedCheckpoint loaded = load_checkpoint(p);
  // The reloaded parameters are the binary32 roundings; a model rebuilt
  // from them and saved again must decode identically to itself.
  LoadedCheckpoint again = load_checkpoint(p);
  for (std::uint64_t s = 0; s < 16; ++s) {
    const Tensor img = with_content(32, 100, 8, 84, 50 + s);
    EXPECT_EQ(best_path_decode(loaded.model.forward(img)),
              best_path_decode(again.model.forward(img)));
  }
  fs::remove(p);
}

TEST(Checkpoint, StandardPresetIsAbout33Megabytes) {
  Model m(preset_standard(), 1);
  const fs::path p = temp_path("standard.ckpt");
  save_checkpoint(m, p);
  const double mb = static_cast<double>(fs::file_size(p)) / 1e6;
  EXPECT_GE(mb, 33.0 * 0.9);
  EXPECT_LE(mb, 33.0 * 1.1);
  fs::remove(p);
}

class CorruptCheckpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    Model m(toy_config(), 4);
    path_ = temp_path("corrupt.ckpt");
    save_checkpoint(m, path_, {7, "momentum", {{0.5}}});
    bytes_ = slurp(path_);
  }
  void TearDown() override { fs::remove(path_); }

  fs::path path_;
  std::string bytes_;
};

TEST_F(CorruptCheckpoint, BadMagicIsFormatError) {
  bytes_[0] = 'X';
  spit(path_, bytes_);
  EXPECT_THROW(load_checkpoint(path_), CheckpointFormatError);
}

TEST_F(CorruptCheckpoint, OtherVersionIsVersionError) {
  bytes_[8] = 9;
  spit(path_, bytes_);
  EXPECT_THROW(load_checkpoint(path_), CheckpointVersionError);
}

TEST_F(CorruptCheckpoint, EditedConfigIsDigestError) {
  const std::size_t at = bytes_.find("input_height=4");
  ASSERT_NE(at, std::string::npos);
  bytes_[at + 13] = '8';
  spit(path_, bytes_);
  EXPECT_THROW(load_checkpoint(path_), CheckpointDigestError);
}

TEST_F(CorruptCheckpoint, DifferentExpectedConfigIsDigestError) {
  ModelConfig other = toy_config();
  other.alphabet = Alphabet("0123");
  EXPECT_THROW(load_checkpoint(path_, &other), CheckpointDigestError);
  const ModelConfig same = toy_config();
  EXPECT_NO_THROW(load_checkpoint(path_, &same));
}

TEST_F(CorruptCheckpoint, EveryTruncationIsTruncatedError) {
  for (std::size_t n = 8 + 2 + 8; n < bytes_.size(); n += 7) {
    spit(path_, bytes_.substr(0, n));
    EXPECT_THROW(load_checkpoint(path_), CheckpointTruncatedError) << n;
  }
}

TEST_F(CorruptCheckpoint, TrailingBytesAreFormatError) {
  spit(path_, bytes_ + "x");
  EXPECT_THROW(load_checkpoint(path_), CheckpointFormatError);
}

TEST(Checkpoint, MissingFileIsStorageError) {
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.ckpt")), StorageError);
}

}  // namespace
}  // namespace crnn
