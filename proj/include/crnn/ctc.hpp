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

// Connectionist temporal classification: the collapse mapping, path and
// label-sequence probabilities, and the negative log-likelihood objective
// with gradients with respect to pre-softmax activations.
//
// Class index 0 of the extended label set is the blank; labels of the
// alphabet occupy indices 1..|L|.

#ifndef CRNN_CTC_HPP_
#define CRNN_CTC_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crnn/tensor.hpp"

namespace crnn {

using Label = std::int32_t;
inline constexpr Label kBlank = 0;

// Sequence over the alphabet (indices 1..|L|, never blank).
using LabelSequence = std::vector<Label>;
// Frame-level path over the extended set (blank allowed).
using Path = std::vector<Label>;

class Alphabet {
 public:
  // `symbols` lists the labels in index order (first symbol gets index 1).
  // With `fold_case`, letters are matched case-insensitively.
  explicit Alphabet(std::string symbols, bool fold_case = false);

  static Alphabet alphanumeric();  // 0-9a-z, case-insensitive
  static Alphabet digits();

  std::size_t size() const { return symbols_.size(); }
  std::size_t num_classes() const { return symbols_.size() + 1; }
  const std::string& symbols() const { return symbols_; }
  bool fold_case() const { return fold_case_; }

  Label index_of(char symbol) const;
  char symbol(Label label) const;
  LabelSequence encode(std::string_view text) const;
  std::string decode(std::span<const Label> labels) const;
  // Encodes a frame path in which `blank` marks the blank class.
  Path encode_path(std::string_view text, char blank = '-') const;

  bool operator==(const Alphabet&) const = default;

 private:
  std::string symbols_;
  bool fold_case_;
  int lookup_[256];
};

// T x |L'| matrix of per-frame distributions over the extended label set.
class FrameDistributions {
 public:
  FrameDistributions() = default;
  // Rows must be non-negative and sum to 1 within 1e-9.
  FrameDistributions(std::size_t frames, std::size_t classes,
                     std::vector<double> probabilities);

  // Row-wise softmax of raw activations.
  static FrameDistributions from_activations(std::size_t frames,
                                             std::size_t classes,
                                             std::span<const double> activations);

  std::size_t frames() const { return frames_; }
  std::size_t classes() const { return classes_; }
  double operator()(std::size_t t, std::size_t k) const {
    return probabilities_[t * classes_ + k];
  }
  std::span<const double> row(std::size_t t) const {
    return {probabilities_.data() + t * classes_, classes_};
  }
  std::span<const double> data() const { return probabilities_; }

 private:
  std::size_t frames_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> probabilities_;
};

// Merges runs of repeated symbols, then deletes blanks. Symbols must lie in
// [0, num_classes).
LabelSequence collapse(std::span<const Label> path, std::size_t num_classes);

// Product of the chosen per-frame probabilities.
double path_probability(std::span<const Label> path, const FrameDistributions& y);

// Forward (alpha) and backward (beta) log-variables over the blank-augmented
// target (-, l1, -, l2, ..., -). alpha_t(s) includes frame t's emission;
// beta_t(s) covers frames t+1..T-1 only, so sum_s alpha_t(s) beta_t(s) = p(l|y)
// for every t.
struct ForwardBackward {
  std::size_t frames = 0;
  std::size_t states = 0;
  std::vector<double> log_alpha;  // frames x states
  std::vector<double> log_beta;   // frames x states
  double log_likelihood = 0.0;    // log p(l|y); -inf when infeasible

  double alpha(std::size_t t, std::size_t s) const { return log_alpha[t * states + s]; }
  double beta(std::size_t t, std::size_t s) const { return log_beta[t * states + s]; }
};

// `log_probs` is frames x classes of log y.
ForwardBackward forward_backward(std::span<const Label> labels,
                                 std::span<const double> log_probs,
                                 std::size_t frames, std::size_t classes);

double log_sequence_probability(std::span<const Label> labels,
                                const FrameDistributions& y);
double sequence_probability(std::span<const Label> labels,
                            const FrameDistributions& y);

// -log p(l|y). Throws InfeasibleTargetError when p(l|y) = 0.
double ctc_loss(std::span<const Label> labels, const FrameDistributions& y);

struct CtcLossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d activation, frames x classes
};

// Loss and its gradient with respect to the pre-softmax activations.
CtcLossAndGradient ctc_loss_grad(std::span<const Label> labels,
                                 std::span<const double> activations,
                                 std::size_t frames, std::size_t classes);

// Graph op: scalar -log p(l | softmax(activations)) for activations [T x K].
Tensor ctc_loss(const Tensor& activations, std::span<const Label> labels);

struct CtcBatchStats {
  std::size_t feasible = 0;
  std::size_t infeasible = 0;
  double loss_sum = 0.0;  // over feasible samples
};

// Graph op over logits [T x N x K]: the mean loss of the feasible samples.
// Infeasible targets contribute neither loss nor gradient and are counted in
// `stats`. Returns a zero scalar if no sample is feasible.
Tensor ctc_batch_loss(const Tensor& logits,
                      const std::vector<LabelSequence>& labels,
                      CtcBatchStats* stats = nullptr);

// Minimum number of frames a label sequence needs: its length plus one per
// adjacent repeated pair.
std::size_t min_frames_for(std::span<const Label> labels);

}  // namespace crnn

#endif  // CRNN_CTC_HPP_
