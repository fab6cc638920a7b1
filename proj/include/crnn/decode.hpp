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

// Transcription: lexicon-free best-path decoding and lexicon-constrained
// decoding over an edit-distance neighbourhood found with a BK-tree.

#ifndef CRNN_DECODE_HPP_
#define CRNN_DECODE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "crnn/ctc.hpp"

namespace crnn {

inline constexpr int kDefaultDelta = 3;

// Per-frame argmax (lowest index on ties) followed by collapse.
LabelSequence best_path_decode(const FrameDistributions& y);

// Levenshtein distance with unit costs.
std::size_t edit_distance(std::span<const Label> a, std::span<const Label> b);
std::size_t edit_distance(std::string_view a, std::string_view b);

// A deduplicated set of label sequences kept in canonical (lexicographic)
// order.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<LabelSequence> entries);

  static Lexicon from_words(std::span<const std::string> words,
                            const Alphabet& alphabet);
  // One entry per line; blank lines are skipped, other lines must encode
  // over `alphabet`. Throws StorageError when the file cannot be read.
  static Lexicon load(const std::filesystem::path& path,
                      const Alphabet& alphabet);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<LabelSequence>& entries() const { return entries_; }
  bool contains(std::span<const Label> sequence) const;

 private:
  std::vector<LabelSequence> entries_;
};

// Nodes visited and subtrees pruned during one query.
struct BkQueryTrace {
  std::size_t visited = 0;
  std::vector<std::uint32_t> pruned;  // roots of skipped subtrees
};

// Burkhard-Keller metric tree over edit distance.
class BkTree {
 public:
  struct Node {
    LabelSequence entry;
    // (distance to this node, child index), in insertion order.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> children;
  };

  // Inserts the lexicon in canonical order; the first entry is the root.
  // Throws UsageError for an empty lexicon.
  static BkTree build(const Lexicon& lexicon);

  // Every entry within `delta` edits of `query`, in canonical order.
  std::vector<LabelSequence> query(std::span<const Label> query, int delta,
                                   BkQueryTrace* trace = nullptr) const;

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

std::vector<LabelSequence> bk_query(const BkTree& tree,
                                    std::span<const Label> query, int delta);

struct ScoredSequence {
  LabelSequence sequence;
  double log_probability = 0.0;
  double probability() const;
};

// argmax of p(l|y) over `candidates`; ties go to the canonically smallest
// sequence. Throws UsageError for an empty candidate set.
ScoredSequence score_candidates(const FrameDistributions& y,
                                std::span<const LabelSequence> candidates);

struct LexiconDecodeResult {
  LabelSequence sequence;
  double log_probability = 0.0;  // of `sequence`; -inf when out of lexicon
  LabelSequence lexicon_free;
  std::size_t candidates = 0;
  bool out_of_lexicon = false;
};

// Scores the lexicon entries within `delta` edits of the best-path
// transcription. With no candidates, returns the best-path transcription
// flagged out-of-lexicon.
LexiconDecodeResult lexicon_decode(const FrameDistributions& y,
                                   const BkTree& tree, int delta);

// Lexicon decoding policy: small lexicons are scored exhaustively, larger
// ones go through the BK-tree neighbourhood search.
class LexiconDecoder {
 public:
  static constexpr std::size_t kExhaustiveLimit = 1000;

  LexiconDecoder(Lexicon lexicon, int delta = kDefaultDelta);

  LexiconDecodeResult decode(const FrameDistributions& y) const;

  const Lexicon& lexicon() const { return lexicon_; }
  const BkTree& tree() const { return tree_; }
  int delta() const { return delta_; }
  bool exhaustive() const { return lexicon_.size() <= kExhaustiveLimit; }

 private:
  Lexicon lexicon_;
  BkTree tree_;
  int delta_;
};

}  // namespace crnn

#endif  // CRNN_DECODE_HPP_
