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

#include "crnn/ctc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "crnn/error.hpp"

namespace crnn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

std::string labels_string(std::span<const Label> labels) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out << ',';
    out << labels[i];
  }
  out << ')';
  return out.str();
}

void check_labels(std::span<const Label> labels, std::size_t classes) {
  for (Label l : labels) {
    if (l <= kBlank || static_cast<std::size_t>(l) >= classes) {
      throw AlphabetError("label " + std::to_string(l) +
                          " is not a member of an alphabet with " +
                          std::to_string(classes - 1) + " labels");
    }
  }
}

std::vector<double> log_softmax(std::span<const double> activations,
                                std::size_t frames, std::size_t classes,
                                std::vector<double>* probs) {
  std::vector<double> out(frames * classes);
  if (probs) probs->resize(frames * classes);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* a = activations.data() + t * classes;
    const double peak = *std::max_element(a, a + classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) total += std::exp(a[k] - peak);
    const double log_total = peak + std::log(total);
    for (std::size_t k = 0; k < classes; ++k) {
      out[t * classes + k] = a[k] - log_total;
      if (probs) (*probs)[t * classes + k] = std::exp(out[t * classes + k]);
    }
  }
  return out;
}

std::vector<double> log_of(const FrameDistributions& y) {
  std::vector<double> out(y.data().size());
  std::transform(y.data().begin(), y.data().end(), out.begin(),
                 [](double p) { return p > 0.0 ? std::log(p) : kNegInf; });
  return out;
}

}  // namespace

Alphabet::Alphabet(std::string symbols, bool fold_case)
    : symbols_(std::move(symbols)), fold_case_(fold_case) {
  std::fill(std::begin(lookup_), std::end(lookup_), -1);
  if (symbols_.empty()) throw AlphabetError("alphabet is empty");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    char c = symbols_[i];
    if (fold_case_) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      symbols_[i] = c;
    }
    auto& slot = lookup_[static_cast<unsigned char>(c)];
    if (slot != -1) {
      throw AlphabetError(std::string("duplicate alphabet symbol '") + c + "'");
    }
    slot = static_cast<int>(i) + 1;
    if (fold_case_) {
      lookup_[static_cast<unsigned char>(
          std::toupper(static_cast<unsigned char>(c)))] = slot;
    }
  }
}

Alphabet Alphabet::alphanumeric() {
  return Alphabet("0123456789abcdefghijklmnopqrstuvwxyz", true);
}

Alphabet Alphabet::digits() { return Alphabet("0123456789"); }

Label Alphabet::index_of(char symbol) const {
  const int idx = lookup_[static_cast<unsigned char>(symbol)];
  if (idx < 0) {
    throw AlphabetError(std::string("symbol '") + symbol +
                        "' is not in the alphabet");
  }
  return idx;
}

char Alphabet::symbol(Label label) const {
  if (label <= kBlank || static_cast<std::size_t>(label) > symbols_.size()) {
    throw AlphabetError("label " + std::to_string(label) +
                        " is not in the alphabet");
  }
  return symbols_[static_cast<std::size_t>(label) - 1];
}

LabelSequence Alphabet::encode(std::string_view text) const {
  LabelSequence out;
  out.reserve(text.size());
  for (char c : text) out.push_back(index_of(c));
  return out;
}

std::string Alphabet::decode(std::span<const Label> labels) const {
  std::string out;
  out.reserve(labels.size());
  for (Label l : labels) out.push_back(symbol(l));
  return out;
}

Path Alphabet::encode_path(std::string_view text, char blank) const {
  if (lookup_[static_cast<unsigned char>(blank)] != -1) {
    throw AlphabetError(std::string("blank marker '") + blank +
                        "' collides with an alphabet symbol");
  }
  Path out;
  out.reserve(text.size());
  for (char c : text) out.push_back(c == blank ? kBlank : index_of(c));
  return out;
}

FrameDistributions::FrameDistributions(std::size_t frames, std::size_t classes,
                                       std::vector<double> probabilities)
    : frames_(frames), classes_(classes), probabilities_(std::move(probabilities)) {
  if (classes_ < 1 || probabilities_.size() != frames_ * classes_) {
    throw DimensionError("frame distributions need " +
                         std::to_string(frames_ * classes_) + " values");
  }
  for (std::size_t t = 0; t < frames_; ++t) {
    double total = 0.0;
    for (double p : row(t)) {
      if (!(p >= 0.0)) {
        throw UsageError("frame " + std::to_string(t) +
                         " has a negative or non-finite probability");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw UsageError("frame " + std::to_string(t) + " sums to " +
                       std::to_string(total));
    }
  }
}

FrameDistributions FrameDistributions::from_activations(
    std::size_t frames, std::size_t classes, std::span<const double> activations) {
  if (activations.size() != frames * classes) {
    throw DimensionError("activation count does not match frames x classes");
  }
  std::vector<double> probs;
  log_softmax(activations, frames, classes, &probs);
  return FrameDistributions(frames, classes, std::move(probs));
}

LabelSequence collapse(std::span<const Label> path, std::size_t num_classes) {
  LabelSequence out;
  Label previous = -1;
  for (Label symbol : path) {
    if (symbol < 0 || static_cast<std::size_t>(symbol) >= num_classes) {
      throw AlphabetError("path symbol " + std::to_string(symbol) +
                          " is outside the extended label set");
    }
    if (symbol != previous && symbol != kBlank) out.push_back(symbol);
    previous = symbol;
  }
  return out;
}

double path_probability(std::span<const Label> path, const FrameDistributions& y) {
  if (path.size() != y.frames()) {
    throw UsageError("path of length " + std::to_string(path.size()) +
                     " scored against " + std::to_string(y.frames()) + " frames");
  }
  double p = 1.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] < 0 || static_cast<std::size_t>(path[t]) >= y.classes()) {
      throw AlphabetError("path symbol " + std::to_string(path[t]) +
                          " is outside the extended label set");
    }
    p *= y(t, static_cast<std::size_t>(path[t]));
  }
  return p;
}

std::size_t min_frames_for(std::span<const Label> labels) {
  std::size_t needed = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++needed;
  }
  return needed;
}

ForwardBackward forward_backward(std::span<const Label> labels,
                                 std::span<const double> log_probs,
                                 std::size_t frames, std::size_t classes) {
  check_labels(labels, classes);
  if (frames == 0 || log_probs.size() != frames * classes) {
    throw DimensionError("forward_backward: log-probabilities do not match " +
                         std::to_string(frames) + " x " + std::to_string(classes));
  }
  const std::size_t states = 2 * labels.size() + 1;
  auto ext = [&](std::size_t s) -> std::size_t {
    return s % 2 == 0 ? 0 : static_cast<std::size_t>(labels[s / 2]);
  };
  // Skipping the blank between s-2 and s is allowed only between distinct
  // labels.
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && s % 2 == 1 && ext(s) != ext(s - 2);
  };
  auto emit = [&](std::size_t t, std::size_t s) {
    return log_probs[t * classes + ext(s)];
  };

  ForwardBackward fb;
  fb.frames = frames;
  fb.states = states;
  fb.log_alpha.assign(frames * states, kNegInf);
  fb.log_beta.assign(frames * states, kNegInf);

  fb.log_alpha[0] = emit(0, 0);
  if (states > 1) fb.log_alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    const double* prev = fb.log_alpha.data() + (t - 1) * states;
    double* cur = fb.log_alpha.data() + t * states;
    for (std::size_t s = 0; s < states; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (can_skip(s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + emit(t, s);
    }
  }

  double* last = fb.log_beta.data() + (frames - 1) * states;
  last[states - 1] = 0.0;
  if (states > 1) last[states - 2] = 0.0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    const double* next = fb.log_beta.data() + (t + 1) * states;
    double* cur = fb.log_beta.data() + t * states;
    for (std::size_t s = 0; s < states; ++s) {
      double acc = next[s] == kNegInf ? kNegInf : next[s] + emit(t + 1, s);
      if (s + 1 < states && next[s + 1] != kNegInf) {
        acc = log_add(acc, next[s + 1] + emit(t + 1, s + 1));
      }
      if (s + 2 < states && can_skip(s + 2) && next[s + 2] != kNegInf) {
        acc = log_add(acc, next[s + 2] + emit(t + 1, s + 2));
      }
      cur[s] = acc;
    }
  }

  const double* final_alpha = fb.log_alpha.data() + (frames - 1) * states;
  fb.log_likelihood = final_alpha[states - 1];
  if (states > 1) fb.log_likelihood = log_add(fb.log_likelihood, final_alpha[states - 2]);
  return fb;
}

double log_sequence_probability(std::span<const Label> labels,
                                const FrameDistributions& y) {
  check_labels(labels, y.classes());
  if (y.frames() == 0) return labels.empty() ? 0.0 : kNegInf;
  const auto logs = log_of(y);
  return forward_backward(labels, logs, y.frames(), y.classes()).log_likelihood;
}

double sequence_probability(std::span<const Label> labels,
                            const FrameDistributions& y) {
  return std::exp(log_sequence_probability(labels, y));
}

double ctc_loss(std::span<const Label> labels, const FrameDistributions& y) {
  const double log_p = log_sequence_probability(labels, y);
  if (log_p == kNegInf) {
    throw InfeasibleTargetError("target " + labels_string(labels) +
                                " cannot be aligned to " +
                                std::to_string(y.frames()) + " frames");
  }
  return -log_p;
}

CtcLossAndGradient ctc_loss_grad(std::span<const Label> labels,
                                 std::span<const double> activations,
                                 std::size_t frames, std::size_t classes) {
  if (activations.size() != frames * classes || frames == 0) {
    throw DimensionError("ctc_loss_grad: activations do not match " +
                         std::to_string(frames) + " x " + std::to_string(classes));
  }
  std::vector<double> probs;
  const auto logs = log_softmax(activations, frames, classes, &probs);
  const ForwardBackward fb = forward_backward(labels, logs, frames, classes);
  if (fb.log_likelihood == kNegInf) {
    throw InfeasibleTargetError("target " + labels_string(labels) +
                                " cannot be aligned to " +
                                std::to_string(frames) + " frames");
  }

  // d(-log p)/du_tk = y_tk - (1/p) * sum_{s: ext(s)=k} alpha_t(s) beta_t(s)
  CtcLossAndGradient out;
  out.loss = -fb.log_likelihood;
  out.grad = std::move(probs);
  std::vector<double> occupancy(classes);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < fb.states; ++s) {
      const std::size_t k = s % 2 == 0 ? 0 : static_cast<std::size_t>(labels[s / 2]);
      occupancy[k] = log_add(occupancy[k], fb.alpha(t, s) + fb.beta(t, s));
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (occupancy[k] != kNegInf) {
        out.grad[t * classes + k] -= std::exp(occupancy[k] - fb.log_likelihood);
      }
    }
  }
  return out;
}

Tensor ctc_loss(const Tensor& activations, std::span<const Label> labels) {
  if (activations.rank() != 2) {
    throw DimensionError("ctc_loss expects [T x K] activations, got " +
                         shape_string(activations.shape()));
  }
  auto result = ctc_loss_grad(labels, activations.values(), activations.dim(0),
                              activations.dim(1));
  return record({1}, {result.loss}, {activations},
                [grad = std::move(result.grad)](std::span<const double> g,
                                                std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  for (std::size_t i = 0; i < grad.size(); ++i) {
                    (*grads[0])[i] += g[0] * grad[i];
                  }
                });
}

Tensor ctc_batch_loss(const Tensor& logits,
                      const std::vector<LabelSequence>& labels,
                      CtcBatchStats* stats) {
  if (logits.rank() != 3) {
    throw DimensionError("ctc_batch_loss expects [T x N x K] logits, got " +
                         shape_string(logits.shape()));
  }
  const std::size_t frames = logits.dim(0);
  const std::size_t batch = logits.dim(1);
  const std::size_t classes = logits.dim(2);
  if (labels.size() != batch) {
    throw UsageError("ctc_batch_loss: " + std::to_string(labels.size()) +
                     " targets for a batch of " + std::to_string(batch));
  }

  CtcBatchStats local;
  std::vector<double> grad(logits.numel(), 0.0);
  std::vector<double> sample(frames * classes);
  auto v = logits.values();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < frames; ++t) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((t * batch + n) * classes),
                  classes, sample.begin() + static_cast<std::ptrdiff_t>(t * classes));
    }
    try {
      auto result = ctc_loss_grad(labels[n], sample, frames, classes);
      ++local.feasible;
      local.loss_sum += result.loss;
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < classes; ++k) {
          grad[(t * batch + n) * classes + k] = result.grad[t * classes + k];
        }
      }
    } catch (const InfeasibleTargetError&) {
      ++local.infeasible;
    }
  }
  if (stats) {
    stats->feasible += local.feasible;
    stats->infeasible += local.infeasible;
    stats->loss_sum += local.loss_sum;
  }
  const double denom = local.feasible ? static_cast<double>(local.feasible) : 1.0;
  return record({1}, {local.loss_sum / denom}, {logits},
                [grad = std::move(grad), denom](std::span<const double> g,
                                                std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  const double k = g[0] / denom;
                  for (std::size_t i = 0; i < grad.size(); ++i) {
                    (*grads[0])[i] += k * grad[i];
                  }
                });
}

}  // namespace crnn
