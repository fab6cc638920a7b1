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


#include "crnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "crnn/error.hpp"

namespace crnn {
namespace {

struct GlyphRows {
  char symbol;
  const char* rows[kGlyphHeight];
};

// clang-format off
constexpr GlyphRows kFont[] = {
  {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
  {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
  {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
  {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
  {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
  {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
  {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
  {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
  {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
  {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
  {'a', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
  {'b', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
  {'c', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
  {'d', {"###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."}},
  {'e', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
  {'f', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
  {'g', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}},
  {'h', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
  {'i', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
  {'j', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
  {'k', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
  {'l', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
  {'m', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
  {'n', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
  {'o', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
  {'p', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
  {'q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
  {'r', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
  {'s', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
  {'t', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
  {'u', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
  {'v', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
  {'w', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
  {'x', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
  {'y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
  {'z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
};
// clang-format on

unsigned char key(char c) {
  return static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(c)));
}

double sample_clamped(const std::vector<double>& img, std::size_t h, std::size_t w,
                      double y, double x, double outside) {
  // Bilinear lookup; taps outside the image read `outside`.
  const double fy = std::floor(y), fx = std::floor(x);
  const double ay = y - fy, ax = x - fx;
  auto at = [&](double yy, double xx) {
    if (yy < 0 || xx < 0 || yy >= static_cast<double>(h) || xx >= static_cast<double>(w)) {
      return outside;
    }
    return img[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
  };
  return (1 - ay) * ((1 - ax) * at(fy, fx) + ax * at(fy, fx + 1)) +
         ay * ((1 - ax) * at(fy + 1, fx) + ax * at(fy + 1, fx + 1));
}

}  // namespace

GlyphAtlas::GlyphAtlas() {
  for (const GlyphRows& g : kFont) {
    Glyph& out = glyphs_[key(g.symbol)];
    for (std::size_t r = 0; r < kGlyphHeight; ++r) {
      for (std::size_t c = 0; c < kGlyphWidth; ++c) {
        out[r * kGlyphWidth + c] = g.rows[r][c] == '#' ? 1 : 0;
      }
    }
    present_[key(g.symbol)] = true;
  }
}

const GlyphAtlas& GlyphAtlas::builtin() {
  static const GlyphAtlas atlas;
  return atlas;
}

bool GlyphAtlas::has(char symbol) const { return present_[key(symbol)]; }

const Glyph& GlyphAtlas::glyph(char symbol) const {
  if (!has(symbol)) {
    throw AlphabetError(std::string("no glyph for symbol '") + symbol + "'");
  }
  return glyphs_[key(symbol)];
}

void GlyphAtlas::require(const Alphabet& alphabet) const {
  for (char c : alphabet.symbols()) glyph(c);
}

RenderParams RenderParams::clean() { return RenderParams{}; }

RenderParams RenderParams::training() {
  RenderParams p;
  p.spacing_jitter = 1;
  p.noise_sigma = 0.08;
  p.max_rotation_deg = 3.0;
  p.max_scale_jitter = 0.10;
  p.max_background_shift = 0.3;
  return p;
}

RenderParams RenderParams::max_distortion() {
  RenderParams p = training();
  p.spacing_jitter = 2;
  p.noise_sigma = 0.2;
  p.max_background_shift = 0.4;
  return p;
}

SampleRecord render(const LabelSequence& label, const Alphabet& alphabet,
                    std::uint64_t seed, const RenderParams& params) {
  if (label.empty()) throw UsageError("cannot render an empty label");
  if (label.size() > params.max_length) {
    throw UsageError("label of length " + std::to_string(label.size()) +
                     " exceeds the maximum of " + std::to_string(params.max_length));
  }
  const std::size_t gh = kGlyphHeight * params.scale_y;
  const std::size_t gw = kGlyphWidth * params.scale_x;
  if (params.height < gh) throw UsageError("render height is below the glyph height");
  const GlyphAtlas& atlas = GlyphAtlas::builtin();
  std::vector<const Glyph*> glyphs;
  for (Label l : label) glyphs.push_back(&atlas.glyph(alphabet.symbol(l)));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> jitter(0, params.spacing_jitter);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  std::vector<std::size_t> gaps(label.size() - 1);
  for (std::size_t& g : gaps) g = params.gap + jitter(rng);
  std::size_t wc = 2 * params.margin + label.size() * gw;
  for (std::size_t g : gaps) wc += g;
  const std::size_t h = params.height;

  // Ink coverage of the undistorted strip.
  std::vector<double> cover(h * wc, 0.0);
  const std::size_t top = (h - gh) / 2;
  std::size_t left = params.margin;
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    for (std::size_t y = 0; y < gh; ++y) {
      for (std::size_t x = 0; x < gw; ++x) {
        cover[(top + y) * wc + left + x] =
            (*glyphs[i])[(y / params.scale_y) * kGlyphWidth + x / params.scale_x];
      }
    }
    left += gw + (i < gaps.size() ? gaps[i] : 0);
  }

  const double sx = 1.0 + params.max_scale_jitter * unit(rng);
  const double theta = params.max_rotation_deg * unit(rng) * std::numbers::pi / 180.0;
  const double bg = 1.0 - params.max_background_shift * 0.5 * (unit(rng) + 1.0);

  std::size_t wo = wc;
  std::vector<double> warped;
  if (sx == 1.0 && theta == 0.0) {
    warped = std::move(cover);
  } else {
    wo = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(wc * sx)));
    warped.assign(h * wo, 0.0);
    const double c = std::cos(theta), s = std::sin(theta);
    const double cxo = wo / 2.0, cxc = wc / 2.0, cy = h / 2.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        const double dx = x + 0.5 - cxo, dy = y + 0.5 - cy;
        const double rx = c * dx + s * dy;
        const double ry = -s * dx + c * dy;
        warped[y * wo + x] =
            sample_clamped(cover, h, wc, ry + cy - 0.5, rx / sx + cxc - 0.5, 0.0);
      }
    }
  }

  std::normal_distribution<double> noise(0.0, params.noise_sigma > 0 ? params.noise_sigma : 1.0);
  std::vector<double> pixels(h * wo);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    double v = bg * (1.0 - warped[i]);
    if (params.noise_sigma > 0) v += noise(rng);
    pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return SampleRecord{Tensor({1, h, wo}, std::move(pixels)), label, seed};
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw DimensionError("expected a non-empty [1 x H x W] image");
  }
  if (height == 0 || width == 0) throw DimensionError("resize target must be non-empty");
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return Tensor(image.shape(), std::vector<double>(
                                                   image.values().begin(), image.values().end()));
  const auto src = image.values();
  std::vector<double> out(height * width);
  const double ry = static_cast<double>(h) / height;
  const double rx = static_cast<double>(w) / width;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ay = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * rx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double ax = fx - x0;
      out[y * width + x] =
          (1 - ay) * ((1 - ax) * src[y0 * w + x0] + ax * src[y0 * w + x1]) +
          ay * ((1 - ax) * src[y1 * w + x0] + ax * src[y1 * w + x1]);
    }
  }
  return Tensor({1, height, width}, std::move(out));
}

std::size_t normalized_width(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DimensionError("image must be non-empty");
  const double scaled = static_cast<double>(width) * 32.0 / static_cast<double>(height);
  const std::size_t rounded = static_cast<std::size_t>(std::floor(scaled / 4.0 + 0.5)) * 4;
  return std::max<std::size_t>(rounded, 100);
}

namespace {

Tensor standardize(Tensor image, double max_value) {
  for (double& v : image.values()) v = v / max_value - 0.5;
  return image;
}

}  // namespace

Tensor normalize_input(const Tensor& image, double max_value) {
  if (image.rank() != 3) throw DimensionError("expected a [1 x H x W] image");
  return standardize(
      resize_bilinear(image, 32, normalized_width(image.dim(1), image.dim(2))), max_value);
}

Tensor normalize_training(const Tensor& image, double max_value) {
  return standardize(resize_bilinear(image, 32, 100), max_value);
}

Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string comment;
        std::getline(in, comment);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) return t;
      } else {
        t += c;
      }
    }
    return t;
  };
  if (token() != "P5") throw StorageError(path.string() + " is not a binary PGM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw StorageError(path.string() + " has a malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw StorageError(path.string() + ": unsupported PGM geometry or depth");
  }
  std::vector<unsigned char> raw(w * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw StorageError(path.string() + " is truncated");
  }
  std::vector<double> px(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) px[i] = raw[i] / static_cast<double>(maxval);
  return Tensor({1, h, w}, std::move(px));
}

void save_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) throw DimensionError("expected [1 x H x W]");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::string bytes = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : image.values()) {
    bytes += static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StorageError("cannot write image " + path.string());
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw StorageError("unknown split '" + std::string(name) + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<ManifestEntry> plan_dataset(const DatasetOptions& options) {
  if (options.n == 0) throw UsageError("dataset size must be at least 1");
  if (options.params.max_length == 0) throw UsageError("maximum label length must be positive");
  GlyphAtlas::builtin().require(options.alphabet);
  const std::size_t n = options.n;
  std::vector<ManifestEntry> out(n);
  std::vector<std::pair<std::uint64_t, std::size_t>> order(n);
  const std::uint64_t split_key = splitmix64(options.seed ^ 0x5a5a5a5a5a5a5a5aULL);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t s = splitmix64(options.seed * 0x100000001b3ULL + i);
    std::mt19937_64 rng(s);
    std::uniform_int_distribution<std::size_t> len(1, options.params.max_length);
    std::uniform_int_distribution<Label> sym(1, static_cast<Label>(options.alphabet.size()));
    LabelSequence label(len(rng));
    for (Label& l : label) l = sym(rng);
    char name[32];
    std::snprintf(name, sizeof name, "%07zu.pgm", i);
    out[i] = ManifestEntry{name, options.alphabet.decode(label), Split::kTrain, s};
    order[i] = {splitmix64(split_key + i), i};
  }
  std::sort(order.begin(), order.end());
  const std::size_t train_end = n * 8 / 10, val_end = n * 9 / 10;
  for (std::size_t r = 0; r < n; ++r) {
    out[order[r].second].split =
        r < train_end ? Split::kTrain : (r < val_end ? Split::kValidation : Split::kTest);
  }
  return out;
}

std::vector<ManifestEntry> make_dataset(const std::filesystem::path& dir,
                                        const DatasetOptions& options) {
  std::vector<ManifestEntry> plan = plan_dataset(options);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());
  for (const ManifestEntry& e : plan) {
    const SampleRecord rec =
        render(options.alphabet.encode(e.label), options.alphabet, e.seed, options.params);
    save_pgm(dir / e.filename, rec.image);
  }
  std::ofstream out(dir / "manifest.tsv", std::ios::binary | std::ios::trunc);
  out << "filename\tlabel\tsplit\tseed\n";
  for (const ManifestEntry& e : plan) {
    out << e.filename << '\t' << e.label << '\t' << split_name(e.split) << '\t' << e.seed
        << '\n';
  }
  if (!out) throw StorageError("cannot write " + (dir / "manifest.tsv").string());
  return plan;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.tsv";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "filename\tlabel\tsplit\tseed") {
    throw StorageError(path.string() + " lacks the manifest header");
  }
  std::vector<ManifestEntry> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string split, seed;
    if (!std::getline(fields, e.filename, '\t') || !std::getline(fields, e.label, '\t') ||
        !std::getline(fields, split, '\t') || !std::getline(fields, seed)) {
      throw StorageError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    e.split = parse_split(split);
    try {
      e.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw StorageError(path.string() + ":" + std::to_string(lineno) + ": bad seed");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace crnn
