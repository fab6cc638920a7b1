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

// Exhaustive path enumeration over L'^T: the exponential-time definition of
// p(l|y), kept independent of the dynamic program it checks.

#ifndef CRNN_TESTS_CTC_ORACLE_HPP_
#define CRNN_TESTS_CTC_ORACLE_HPP_

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "crnn/ctc.hpp"
#include "crnn/error.hpp"

namespace crnn::testing {

inline constexpr double kEnumerationBudget = 1e7;

// Calls `visit(path, probability)` for every path in L'^T.
template <typename Visit>
void enumerate_paths(const FrameDistributions& y, Visit visit) {
  const std::size_t frames = y.frames();
  const std::size_t classes = y.classes();
  if (std::pow(static_cast<double>(classes), static_cast<double>(frames)) >
      kEnumerationBudget) {
    throw UsageError("path enumeration exceeds the 1e7 budget");
  }
  std::vector<Label> path(frames, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t t = 0; t < frames; ++t) p *= y(t, static_cast<std::size_t>(path[t]));
    visit(path, p);
    std::size_t t = 0;
    while (t < frames && static_cast<std::size_t>(++path[t]) == classes) path[t++] = 0;
    if (t == frames) break;
  }
}

// Removes repeats, then blanks; written out again so the oracle shares no
// code with the library.
inline LabelSequence oracle_collapse(const std::vector<Label>& path) {
  LabelSequence merged;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i == 0 || path[i] != path[i - 1]) merged.push_back(path[i]);
  }
  LabelSequence out;
  for (Label l : merged) {
    if (l != kBlank) out.push_back(l);
  }
  return out;
}

inline double brute_force_sequence_probability(const LabelSequence& labels,
                                               const FrameDistributions& y) {
  double total = 0.0;
  enumerate_paths(y, [&](const std::vector<Label>& path, double p) {
    if (oracle_collapse(path) == labels) total += p;
  });
  return total;
}

// p(l|y) for every l reachable from some path.
inline std::map<LabelSequence, double> brute_force_distribution(
    const FrameDistributions& y) {
  std::map<LabelSequence, double> out;
  enumerate_paths(y, [&](const std::vector<Label>& path, double p) {
    out[oracle_collapse(path)] += p;
  });
  return out;
}

inline FrameDistributions random_distributions(std::mt19937_64& rng,
                                               std::size_t frames,
                                               std::size_t classes,
                                               double spread = 3.0) {
  std::normal_distribution<double> dist(0.0, spread);
  std::vector<double> acts(frames * classes);
  for (double& a : acts) a = dist(rng);
  return FrameDistributions::from_activations(frames, classes, acts);
}

inline LabelSequence random_labels(std::mt19937_64& rng, std::size_t max_len,
                                   std::size_t alphabet_size) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<Label> sym(1, static_cast<Label>(alphabet_size));
  LabelSequence out(len(rng));
  for (Label& l : out) l = sym(rng);
  return out;
}

}  // namespace crnn::testing

#endif  // CRNN_TESTS_CTC_ORACLE_HPP_
