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

// Binary checkpoints. Layout, all integers little-endian:
//   "CRNNCKPT"  u16 version  u64 config digest  u32 len + config text
//   u64 step  u32 record count
//   records: u16 name len, name, u8 rank, u32 extents[rank], f32 payload
//   u16 len + optimizer name  u32 slot count  slots: u64 len, f32 payload
// Parameters and batch-norm statistics are stored as binary32.

#ifndef CRNN_CHECKPOINT_HPP_
#define CRNN_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crnn/model.hpp"

namespace crnn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointExtras {
  std::uint64_t step = 0;
  std::string optimizer;
  std::vector<std::vector<double>> optimizer_slots;
};

struct LoadedCheckpoint {
  Model model;
  CheckpointExtras extras;
};

void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const CheckpointExtras& extras = {});

// Throws CheckpointFormatError (bad magic, unknown or missing record, shape
// mismatch), CheckpointVersionError, CheckpointDigestError (embedded config
// does not hash to the stored digest, or differs from `expected`), and
// CheckpointTruncatedError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig* expected = nullptr);

}  // namespace crnn

#endif  // CRNN_CHECKPOINT_HPP_
