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

// Operator commands shared by the command-line tool and the acceptance
// suite: dataset generation, training, evaluation, single-image decoding and
// the delta sweep.

#ifndef CRNN_HARNESS_HPP_
#define CRNN_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crnn/ctc.hpp"
#include "crnn/data.hpp"
#include "crnn/model.hpp"

namespace crnn {

struct RunConfig {
  // Paths.
  std::filesystem::path dataset = "data";
  std::filesystem::path checkpoint = "model.ckpt";
  std::filesystem::path lexicon;  // empty: no lexicon
  std::filesystem::path image;    // decode input
  std::filesystem::path report;   // empty: a default next to the checkpoint

  // Model.
  std::string preset = "standard";
  std::string layers;  // overrides the preset's layer list when non-empty
  std::string alphabet = "0123456789abcdefghijklmnopqrstuvwxyz";
  bool fold_case = true;
  std::size_t input_height = 32;

  // Optimization.
  std::string optimizer = "adadelta";
  double rho = 0.9;
  double epsilon = 1e-6;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;      // 0: no limit
  double time_budget = 0;         // CPU seconds of training, 0: no limit
  double clip_norm = 0;           // 0: no clipping
  std::size_t train_limit = 0;    // use only the first N training samples
  std::size_t eval_train_every = 0;  // epochs between training-set accuracy checks
  bool stop_at_full_train_accuracy = false;
  double target_loss = 0;         // stop once an epoch's training loss is at or below
  bool save_optimizer_state = false;  // optimizer slots in the checkpoint

  // Decoding.
  int delta = 3;
  std::size_t repeats = 5;        // timing repetitions in bench-delta

  // Generation.
  std::size_t n = 0;
  std::size_t max_length = 8;
  std::string distortion = "training";  // clean | training | max

  std::uint64_t seed = 1;

  Alphabet make_alphabet() const;
  ModelConfig model_config() const;
  RenderParams render_params() const;
  // ConfigError for out-of-range or unknown values.
  void validate() const;
};

// `key = value` lines, '#' comments. Keys are the RunConfig field names.
// ConfigError for unknown keys or malformed values, StorageError when the
// file cannot be read.
void apply_config_file(const std::filesystem::path& path, RunConfig& config);
void apply_config_value(const std::string& key, const std::string& value, RunConfig& config);

struct GenResult {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};
GenResult cmd_gen(const RunConfig& config, std::ostream& out);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0;
  std::size_t train_feasible = 0;
  std::size_t train_infeasible = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  std::optional<double> train_accuracy;
  bool saved = false;
  double seconds = 0;  // wall clock, kept out of the main log
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0;
  double seconds = 0;
  std::string stop_reason;
};
TrainResult cmd_train(const RunConfig& config, std::ostream& out);

struct EvalRow {
  std::string mode;  // lexicon_free | lexicon
  int delta = -1;
  std::size_t samples = 0;
  double accuracy = 0;
  double mean_edit_distance = 0;
  double candidate_hit_rate = 0;  // lexicon mode: truth among the scored candidates
  double out_of_lexicon_rate = 0;
};
std::vector<EvalRow> cmd_eval(const RunConfig& config, std::ostream& out);

struct DecodeResult {
  std::string transcription;
  std::optional<std::string> lexicon_transcription;
  std::size_t candidates = 0;
  bool out_of_lexicon = false;
};
DecodeResult cmd_decode(const RunConfig& config, std::ostream& out);

struct BenchRow {
  int delta = 0;
  double accuracy = 0;
  double mean_candidates = 0;
  double out_of_lexicon_rate = 0;
  double mean_search_ms = 0;
  // Per test sample: log p of the selected sequence (-inf when no
  // candidate) and the candidate count.
  std::vector<double> selected_log_probability;
  std::vector<std::size_t> candidates;
};
std::vector<BenchRow> cmd_bench_delta(const RunConfig& config, std::ostream& out);

// Exit status for an exception escaping a command: 2 usage/config,
// 3 data, 4 checkpoint, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace crnn

#endif  // CRNN_HARNESS_HPP_
