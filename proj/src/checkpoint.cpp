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


#include "crnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "crnn/error.hpp"

namespace crnn {
namespace {

constexpr char kMagic[8] = {'C', 'R', 'N', 'N', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
  }
  void bytes(std::string_view s) { buf_.append(s); }
  void floats(std::span<const double> v) {
    for (double d : v) uint(std::bit_cast<std::uint32_t>(static_cast<float>(d)));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> floats(std::size_t n) {
    need(n * 4);
    std::vector<double> out(n);
    for (double& d : out) d = std::bit_cast<float>(uint<std::uint32_t>());
    return out;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint ends at byte " + std::to_string(data_.size()) +
                                     ", needed " + std::to_string(pos_ + n));
    }
  }
  std::string data_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const std::string& name, const Shape& shape,
                  std::span<const double> values) {
  w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t e : shape) w.uint<std::uint32_t>(static_cast<std::uint32_t>(e));
  w.floats(values);
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const CheckpointExtras& extras) {
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.uint<std::uint16_t>(kCheckpointVersion);
  const std::string config = model.config().canonical_text();
  w.uint<std::uint64_t>(fnv1a64(config));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
  w.bytes(config);
  w.uint<std::uint64_t>(extras.step);

  const auto params = model.named_parameters();
  const auto buffers = model.named_buffers();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const auto& [name, t] : params) write_record(w, name, t.shape(), t.values());
  for (const auto& [name, v] : buffers) write_record(w, name, {v->size()}, *v);

  w.uint<std::uint16_t>(static_cast<std::uint16_t>(extras.optimizer.size()));
  w.bytes(extras.optimizer);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(extras.optimizer_slots.size()));
  for (const auto& slot : extras.optimizer_slots) {
    w.uint<std::uint64_t>(slot.size());
    w.floats(slot);
  }

  // Write next to the target and rename so a crash never leaves half a file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write checkpoint " + tmp.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw StorageError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  if (r.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw CheckpointFormatError(path.string() + " is not a checkpoint");
  }
  const auto version = r.uint<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                 ", this build reads " +
                                 std::to_string(kCheckpointVersion));
  }
  const auto digest = r.uint<std::uint64_t>();
  const std::string config_text = r.bytes(r.uint<std::uint32_t>());
  if (fnv1a64(config_text) != digest) {
    throw CheckpointDigestError("embedded config does not match its digest");
  }
  if (expected != nullptr && expected->digest() != digest) {
    throw CheckpointDigestError("checkpoint was written for a different model config");
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_canonical_text(config_text);
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("embedded config: ") + e.what());
  }
  LoadedCheckpoint out{Model(config, 0), {}};
  out.extras.step = r.uint<std::uint64_t>();

  std::map<std::string, Tensor> params;
  for (auto& [name, t] : out.model.named_parameters()) params.emplace(name, t);
  std::map<std::string, std::vector<double>*> buffers;
  for (auto& [name, v] : out.model.named_buffers()) buffers.emplace(name, v);

  const auto count = r.uint<std::uint32_t>();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.uint<std::uint16_t>());
    Shape shape(r.uint<std::uint8_t>());
    std::size_t numel = 1;
    for (std::size_t& e : shape) {
      e = r.uint<std::uint32_t>();
      numel *= e;
    }
    std::vector<double> values = r.floats(numel);
    if (auto p = params.find(name); p != params.end()) {
      if (p->second.shape() != shape) {
        throw CheckpointFormatError("record " + name + " has the wrong shape");
      }
      std::copy(values.begin(), values.end(), p->second.values().begin());
    } else if (auto b = buffers.find(name); b != buffers.end()) {
      if (shape.size() != 1 || b->second->size() != numel) {
        throw CheckpointFormatError("record " + name + " has the wrong shape");
      }
      *b->second = std::move(values);
    } else {
      throw CheckpointFormatError("unknown record " + name);
    }
    if (!seen.insert(name).second) {
      throw CheckpointFormatError("duplicate record " + name);
    }
  }
  if (seen.size() != params.size() + buffers.size()) {
    throw CheckpointFormatError("checkpoint lacks some parameters");
  }
  out.extras.optimizer = r.bytes(r.uint<std::uint16_t>());
  const auto slots = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < slots; ++i) {
    out.extras.optimizer_slots.push_back(r.floats(r.uint<std::uint64_t>()));
  }
  if (!r.at_end()) throw CheckpointFormatError("trailing bytes after checkpoint");
  return out;
}

}  // namespace crnn
