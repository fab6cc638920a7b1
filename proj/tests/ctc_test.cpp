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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "crnn/error.hpp"
#include "ctc_oracle.hpp"
#include "test_util.hpp"

namespace crnn {
namespace {

using testing::brute_force_distribution;
using testing::brute_force_sequence_probability;
using testing::random_distributions;
using testing::random_labels;

FrameDistributions uniform(std::size_t frames, std::size_t classes) {
  return FrameDistributions(
      frames, classes,
      std::vector<double>(frames * classes, 1.0 / static_cast<double>(classes)));
}

TEST(AlphabetTest, ExtendedSetAddsBlank) {
  Alphabet a = Alphabet::alphanumeric();
  EXPECT_EQ(a.size(), 36u);
  EXPECT_EQ(a.num_classes(), 37u);
  EXPECT_EQ(a.index_of('0'), 1);
  EXPECT_EQ(a.index_of('a'), a.index_of('A'));
  EXPECT_EQ(a.decode(a.encode("Hello42")), "hello42");
}

TEST(AlphabetTest, RejectsUnknownAndDuplicateSymbols) {
  EXPECT_THROW(Alphabet::digits().encode("12a"), AlphabetError);
  EXPECT_THROW(Alphabet("abca"), AlphabetError);
  EXPECT_THROW(Alphabet("a-b").encode_path("a-b", '-'), AlphabetError);
}

TEST(CollapseTest, WorkedExampleHello) {
  Alphabet a = Alphabet::alphanumeric();
  LabelSequence out = collapse(a.encode_path("--hh-e-l-ll-oo--"), a.num_classes());
  EXPECT_EQ(a.decode(out), "hello");
}

TEST(CollapseTest, EmptyPath) {
  EXPECT_TRUE(collapse(Path{}, 3).empty());
}

TEST(CollapseTest, BlankSeparatesRepeats) {
  Alphabet a("ab");
  EXPECT_EQ(a.decode(collapse(a.encode_path("aa-a"), 3)), "aa");
}

TEST(CollapseTest, SymbolOutsideExtendedSetIsAlphabetError) {
  EXPECT_THROW(collapse(Path{0, 1, 3}, 3), AlphabetError);
  EXPECT_THROW(collapse(Path{-1}, 3), AlphabetError);
}

TEST(CollapseTest, InvariantUnderEndBlanksAndInPlaceDuplication) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<Label> sym(0, 3);
  std::uniform_int_distribution<std::size_t> len(0, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    Path p(len(rng));
    for (Label& s : p) s = sym(rng);
    const LabelSequence base = collapse(p, 4);
    for (Label l : base) EXPECT_NE(l, kBlank);

    Path padded = p;
    padded.insert(padded.begin(), kBlank);
    padded.push_back(kBlank);
    EXPECT_EQ(collapse(padded, 4), base);

    if (!p.empty()) {
      Path dup = p;
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.size() - 1)(rng);
      dup.insert(dup.begin() + static_cast<std::ptrdiff_t>(i), p[i]);
      EXPECT_EQ(collapse(dup, 4), base);
    }
  }
}

TEST(PathProbabilityTest, UniformRows) {
  EXPECT_DOUBLE_EQ(path_probability(Path{1, 0, 1}, uniform(3, 2)), 0.125);
}

TEST(PathProbabilityTest, OneHotRowsMatchingPath) {
  FrameDistributions y(3, 3, {0, 1, 0, 1, 0, 0, 0, 0, 1});
  EXPECT_DOUBLE_EQ(path_probability(Path{1, 0, 2}, y), 1.0);
}

TEST(PathProbabilityTest, HandProduct) {
  // Rows given as (label, blank) = (0.6, 0.4), (0.3, 0.7); blank is index 0.
  FrameDistributions y(2, 2, {0.4, 0.6, 0.7, 0.3});
  EXPECT_DOUBLE_EQ(path_probability(Path{1, kBlank}, y), 0.42);
}

TEST(PathProbabilityTest, LengthMismatchIsUsageError) {
  EXPECT_THROW(path_probability(Path{1}, uniform(2, 2)), UsageError);
}

TEST(SequenceProbabilityTest, TwoFrameUniformSingleLabel) {
  const FrameDistributions y = uniform(2, 2);
  EXPECT_DOUBLE_EQ(sequence_probability(LabelSequence{1}, y), 0.75);
  EXPECT_DOUBLE_EQ(sequence_probability(LabelSequence{}, y), 0.25);
  EXPECT_DOUBLE_EQ(brute_force_sequence_probability({1}, y), 0.75);
  EXPECT_DOUBLE_EQ(brute_force_sequence_probability({}, y), 0.25);
}

TEST(SequenceProbabilityTest, RepeatNeedsSeparatingBlank) {
  EXPECT_EQ(sequence_probability(LabelSequence{1, 1}, uniform(2, 2)), 0.0);
  EXPECT_GT(sequence_probability(LabelSequence{1, 1}, uniform(3, 2)), 0.0);
  EXPECT_EQ(min_frames_for(LabelSequence{1, 1}), 3u);
}

TEST(SequenceProbabilityTest, LabelOutsideAlphabetIsAlphabetError) {
  EXPECT_THROW(sequence_probability(LabelSequence{2}, uniform(2, 2)), AlphabetError);
  EXPECT_THROW(sequence_probability(LabelSequence{0}, uniform(2, 2)), AlphabetError);
}

TEST(SequenceProbabilityTest, SingleFrame) {
  std::mt19937_64 rng(3);
  const FrameDistributions y = random_distributions(rng, 1, 4);
  EXPECT_DOUBLE_EQ(sequence_probability(LabelSequence{2}, y), y(0, 2));
  EXPECT_DOUBLE_EQ(brute_force_sequence_probability({2}, y), y(0, 2));
}

TEST(SequenceProbabilityTest, MatchesEnumerationOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t frames = 1 + trial % 6;
    const std::size_t labels = 1 + (trial / 6) % 3;
    const FrameDistributions y = random_distributions(rng, frames, labels + 1);
    const LabelSequence l = random_labels(rng, frames, labels);
    EXPECT_NEAR(sequence_probability(l, y), brute_force_sequence_probability(l, y), 1e-12)
        << "trial " << trial;
  }
}

TEST(SequenceProbabilityTest, DistributionOverLabelSequencesSumsToOne) {
  std::mt19937_64 rng(5);
  for (std::size_t frames = 1; frames <= 5; ++frames) {
    const FrameDistributions y = random_distributions(rng, frames, 4);
    double total = 0.0;
    for (const auto& [l, p] : brute_force_distribution(y)) {
      total += sequence_probability(l, y);
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
  }
}

TEST(ForwardBackwardTest, EveryFrameRecoversTheLikelihood) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t frames = 1 + trial % 12;
    const FrameDistributions y = random_distributions(rng, frames, 5);
    const LabelSequence l = random_labels(rng, std::min<std::size_t>(frames, 5), 4);
    std::vector<double> logs(y.data().size());
    for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(y.data()[i]);
    const ForwardBackward fb = forward_backward(l, logs, frames, 5);
    if (fb.log_likelihood == -std::numeric_limits<double>::infinity()) continue;
    for (std::size_t t = 0; t < frames; ++t) {
      double total = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < fb.states; ++s) {
        const double v = fb.alpha(t, s) + fb.beta(t, s);
        if (v == -std::numeric_limits<double>::infinity()) continue;
        const double hi = std::max(total, v);
        total = hi + std::log(std::exp(total - hi) + std::exp(v - hi));
      }
      EXPECT_NEAR(total, fb.log_likelihood, 1e-10);
    }
  }
}

TEST(CtcLossTest, TwoFrameExample) {
  EXPECT_DOUBLE_EQ(ctc_loss(LabelSequence{1}, uniform(2, 2)), -std::log(0.75));
}

TEST(CtcLossTest, OneHotSinglePathHasZeroLoss) {
  Alphabet a("ehlo");
  const Path path = a.encode_path("-hh-e-l-ll-oo");
  std::vector<double> probs(path.size() * a.num_classes(), 0.0);
  for (std::size_t t = 0; t < path.size(); ++t) {
    probs[t * a.num_classes() + static_cast<std::size_t>(path[t])] = 1.0;
  }
  FrameDistributions y(path.size(), a.num_classes(), probs);
  EXPECT_EQ(ctc_loss(a.encode("hello"), y), 0.0);
}

TEST(CtcLossTest, InfeasibleTargetNamesLabelAndFrames) {
  try {
    ctc_loss(LabelSequence{1, 1}, uniform(2, 2));
    FAIL() << "expected InfeasibleTargetError";
  } catch (const InfeasibleTargetError& e) {
    EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2 frames"), std::string::npos);
  }
}

TEST(CtcLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor acts = testing::random_tensor(rng, {5, 4}, -2, 2);
    const LabelSequence l = random_labels(rng, 3, 3);
    auto f = [&] { return ctc_loss(acts, l); };
    EXPECT_LT(testing::gradient_relative_error(f, {acts}), 1e-5) << "trial " << trial;
  }
}

TEST(CtcLossTest, GradientRowsSumToZero) {
  std::mt19937_64 rng(8);
  std::vector<double> acts(6 * 4);
  for (double& a : acts) a = std::normal_distribution<double>()(rng);
  auto r = ctc_loss_grad(LabelSequence{1, 2}, acts, 6, 4);
  for (std::size_t t = 0; t < 6; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += r.grad[t * 4 + k];
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(CtcBatchLossTest, MeanOverFeasibleAndSkipsInfeasible) {
  std::mt19937_64 rng(12);
  Tensor logits = testing::random_tensor(rng, {2, 3, 3}, -1, 1);
  const std::vector<LabelSequence> targets{{1}, {1, 1, 1}, {2, 1}};
  CtcBatchStats stats;
  Tensor loss = ctc_batch_loss(logits, targets, &stats);
  EXPECT_EQ(stats.feasible, 2u);
  EXPECT_EQ(stats.infeasible, 1u);

  double expected = 0.0;
  for (std::size_t n : {0u, 2u}) {
    std::vector<double> acts;
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t k = 0; k < 3; ++k) acts.push_back(logits.values()[(t * 3 + n) * 3 + k]);
    expected += ctc_loss_grad(targets[n], acts, 2, 3).loss;
  }
  EXPECT_NEAR(loss.item(), expected / 2.0, 1e-12);

  loss.backward();
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(logits.grad()[(t * 3 + 1) * 3 + k], 0.0);

  auto f = [&] { return ctc_batch_loss(logits, targets); };
  EXPECT_LT(testing::gradient_relative_error(f, {logits}), 1e-5);
}

TEST(BruteForceOracleTest, BudgetExceededIsUsageError) {
  EXPECT_THROW(brute_force_sequence_probability({1}, uniform(24, 2)), UsageError);
}

}  // namespace
}  // namespace crnn
