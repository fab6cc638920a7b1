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

#include "crnn/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "crnn/error.hpp"

namespace crnn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <typename Sequence>
std::size_t levenshtein(const Sequence& a, const Sequence& b) {
  if (a.size() < b.size()) return levenshtein(b, a);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t above = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diagonal = above;
    }
  }
  return row[b.size()];
}

}  // namespace

LabelSequence best_path_decode(const FrameDistributions& y) {
  Path path(y.frames());
  for (std::size_t t = 0; t < y.frames(); ++t) {
    auto row = y.row(t);
    path[t] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return collapse(path, y.classes());
}

std::size_t edit_distance(std::span<const Label> a, std::span<const Label> b) {
  return levenshtein(a, b);
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  return levenshtein(a, b);
}

Lexicon::Lexicon(std::vector<LabelSequence> entries) : entries_(std::move(entries)) {
  for (const auto& entry : entries_) {
    for (Label l : entry) {
      if (l <= kBlank) throw AlphabetError("lexicon entry contains a blank");
    }
  }
  std::sort(entries_.begin(), entries_.end());
  entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
}

Lexicon Lexicon::from_words(std::span<const std::string> words,
                            const Alphabet& alphabet) {
  std::vector<LabelSequence> entries;
  entries.reserve(words.size());
  for (const auto& w : words) entries.push_back(alphabet.encode(w));
  return Lexicon(std::move(entries));
}

Lexicon Lexicon::load(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot read lexicon " + path.string());
  std::vector<LabelSequence> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      entries.push_back(alphabet.encode(line));
    } catch (const AlphabetError& e) {
      throw AlphabetError(path.string() + ":" + std::to_string(number) + ": " +
                          e.what());
    }
  }
  return Lexicon(std::move(entries));
}

bool Lexicon::contains(std::span<const Label> sequence) const {
  LabelSequence key(sequence.begin(), sequence.end());
  return std::binary_search(entries_.begin(), entries_.end(), key);
}

BkTree BkTree::build(const Lexicon& lexicon) {
  if (lexicon.empty()) throw UsageError("cannot build a BK-tree from an empty lexicon");
  BkTree tree;
  tree.nodes_.reserve(lexicon.size());
  tree.nodes_.push_back({lexicon.entries().front(), {}});
  for (std::size_t i = 1; i < lexicon.size(); ++i) {
    const LabelSequence& entry = lexicon.entries()[i];
    std::uint32_t current = 0;
    while (true) {
      const auto d = static_cast<std::uint32_t>(
          edit_distance(entry, tree.nodes_[current].entry));
      auto& children = tree.nodes_[current].children;
      auto it = std::find_if(children.begin(), children.end(),
                             [d](const auto& c) { return c.first == d; });
      if (it == children.end()) {
        const auto index = static_cast<std::uint32_t>(tree.nodes_.size());
        children.emplace_back(d, index);
        tree.nodes_.push_back({entry, {}});
        break;
      }
      current = it->second;
    }
  }
  return tree;
}

std::vector<LabelSequence> BkTree::query(std::span<const Label> query, int delta,
                                         BkQueryTrace* trace) const {
  if (delta < 0) throw UsageError("delta must be non-negative");
  std::vector<LabelSequence> out;
  std::vector<std::uint32_t> pending{0};
  const auto radius = static_cast<std::size_t>(delta);
  while (!pending.empty()) {
    const std::uint32_t index = pending.back();
    pending.pop_back();
    const Node& node = nodes_[index];
    if (trace) ++trace->visited;
    const std::size_t d = edit_distance(query, node.entry);
    if (d <= radius) out.push_back(node.entry);
    // Triangle inequality: matches below a child keyed k lie at
    // |d - k| <= delta from the query.
    const std::size_t lo = d > radius ? d - radius : 0;
    const std::size_t hi = d + radius;
    for (const auto& [key, child] : node.children) {
      if (key >= lo && key <= hi) {
        pending.push_back(child);
      } else if (trace) {
        trace->pruned.push_back(child);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LabelSequence> bk_query(const BkTree& tree, std::span<const Label> query,
                                    int delta) {
  return tree.query(query, delta);
}

double ScoredSequence::probability() const { return std::exp(log_probability); }

ScoredSequence score_candidates(const FrameDistributions& y,
                                std::span<const LabelSequence> candidates) {
  if (candidates.empty()) throw UsageError("score_candidates: empty candidate set");
  ScoredSequence best;
  bool have = false;
  for (const auto& candidate : candidates) {
    const double lp = log_sequence_probability(candidate, y);
    if (!have || lp > best.log_probability ||
        (lp == best.log_probability && candidate < best.sequence)) {
      best.sequence = candidate;
      best.log_probability = lp;
      have = true;
    }
  }
  return best;
}

LexiconDecodeResult lexicon_decode(const FrameDistributions& y, const BkTree& tree,
                                   int delta) {
  LexiconDecodeResult result;
  result.lexicon_free = best_path_decode(y);
  const auto candidates = tree.query(result.lexicon_free, delta);
  result.candidates = candidates.size();
  if (candidates.empty()) {
    result.sequence = result.lexicon_free;
    result.log_probability = kNegInf;
    result.out_of_lexicon = true;
    return result;
  }
  ScoredSequence best = score_candidates(y, candidates);
  result.sequence = std::move(best.sequence);
  result.log_probability = best.log_probability;
  return result;
}

LexiconDecoder::LexiconDecoder(Lexicon lexicon, int delta)
    : lexicon_(std::move(lexicon)), tree_(BkTree::build(lexicon_)), delta_(delta) {
  if (delta_ < 0) throw UsageError("delta must be non-negative");
}

LexiconDecodeResult LexiconDecoder::decode(const FrameDistributions& y) const {
  if (!exhaustive()) return lexicon_decode(y, tree_, delta_);
  LexiconDecodeResult result;
  result.lexicon_free = best_path_decode(y);
  ScoredSequence best = score_candidates(y, lexicon_.entries());
  result.sequence = std::move(best.sequence);
  result.log_probability = best.log_probability;
  result.candidates = lexicon_.size();
  return result;
}

}  // namespace crnn
