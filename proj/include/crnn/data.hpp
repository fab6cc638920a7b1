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

// Synthetic text-strip generation: a built-in 5x7 glyph atlas, a seeded
// renderer with mild distortions, input normalization, and on-disk datasets
// (PGM images plus a TSV manifest).

#ifndef CRNN_DATA_HPP_
#define CRNN_DATA_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crnn/ctc.hpp"
#include "crnn/tensor.hpp"

namespace crnn {

inline constexpr std::size_t kGlyphWidth = 5;
inline constexpr std::size_t kGlyphHeight = 7;

using Glyph = std::array<std::uint8_t, kGlyphWidth * kGlyphHeight>;  // row-major, 0/1

class GlyphAtlas {
 public:
  // Digits and letters; letters are drawn as capitals and looked up
  // case-insensitively.
  static const GlyphAtlas& builtin();

  bool has(char symbol) const;
  // AlphabetError when the symbol has no glyph.
  const Glyph& glyph(char symbol) const;
  // AlphabetError naming the first symbol of `alphabet` without a glyph.
  void require(const Alphabet& alphabet) const;

 private:
  GlyphAtlas();
  std::array<Glyph, 256> glyphs_{};
  std::array<bool, 256> present_{};
};

struct RenderParams {
  std::size_t height = 32;
  std::size_t max_length = 8;
  // Glyph cells are magnified by these integer factors (10 x 21 pixels).
  std::size_t scale_x = 2;
  std::size_t scale_y = 3;
  std::size_t gap = 2;             // columns between glyphs
  std::size_t spacing_jitter = 0;  // up to this many extra columns per gap
  std::size_t margin = 2;          // columns before the first / after the last glyph
  double noise_sigma = 0.0;        // additive Gaussian noise
  double max_rotation_deg = 0.0;   // uniform in [-r, r]
  double max_scale_jitter = 0.0;   // horizontal factor in [1 - j, 1 + j]
  double max_background_shift = 0.0;  // background in [1 - s, 1], ink stays 0

  static RenderParams clean();
  static RenderParams training();
  static RenderParams max_distortion();
};

struct SampleRecord {
  Tensor image;  // [1 x height x W], dark ink on a light background, values in [0, 1]
  LabelSequence label;
  std::uint64_t seed = 0;
};

// Pure in (label, alphabet, seed, params). UsageError for an empty label or
// one longer than params.max_length; AlphabetError for unknown labels or
// symbols without a glyph.
SampleRecord render(const LabelSequence& label, const Alphabet& alphabet,
                    std::uint64_t seed, const RenderParams& params = RenderParams::clean());

// Bilinear resample of [1 x H x W] with pixel-center alignment.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Height 32, width W*32/H rounded to the nearest multiple of 4 and at least
// 100; values divided by `max_value`, then 0.5 subtracted.
Tensor normalize_input(const Tensor& image, double max_value = 1.0);
std::size_t normalized_width(std::size_t height, std::size_t width);

// Fixed 100 x 32 geometry used for training batches.
Tensor normalize_training(const Tensor& image, double max_value = 1.0);

// 8-bit binary PGM (P5). Values are mapped to [0, 1] on load and clamped
// and rounded on save. StorageError on I/O or format problems.
Tensor load_pgm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const Tensor& image);

enum class Split { kTrain, kValidation, kTest };
const char* split_name(Split split);
Split parse_split(std::string_view name);

struct ManifestEntry {
  std::string filename;
  std::string label;
  Split split = Split::kTrain;
  std::uint64_t seed = 0;
};

struct DatasetOptions {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  Alphabet alphabet = Alphabet::alphanumeric();
  RenderParams params = RenderParams::training();
};

// Labels, per-sample seeds and splits without touching the disk. Lengths
// are uniform in [1, max_length], symbols uniform over the alphabet. The
// split is 80/10/10 with exact sizes: indices are ordered by a seeded hash
// and cut at n*8/10 and n*9/10.
std::vector<ManifestEntry> plan_dataset(const DatasetOptions& options);

// Renders every planned sample into `dir` and writes dir/manifest.tsv.
// UsageError for n == 0; StorageError on I/O failure.
std::vector<ManifestEntry> make_dataset(const std::filesystem::path& dir,
                                        const DatasetOptions& options);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace crnn

#endif  // CRNN_DATA_HPP_
