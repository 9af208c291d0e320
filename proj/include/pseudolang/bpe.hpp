// Copyright 2026 The pseudolang Authors.
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

// Byte-pair encoding over a closed integer alphabet of pseudo characters.
//
// Symbol ids: [0, alphabet) are characters, the next |merges| ids are merge
// results in training order, and the three sentinels <sos>, <eos>, <pad>
// occupy the top of the id space. vocab_size counts all of them.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "pseudolang/sequence.hpp"

namespace pseudolang {

struct BpeMerge {
  Symbol left = 0;
  Symbol right = 0;
  Symbol result = 0;
  bool operator==(const BpeMerge&) const = default;
};

class BpeModel {
 public:
  static constexpr std::size_t kSpecials = 3;

  BpeModel() = default;
  /// Validates that every merge only references ids that already exist and
  /// that results are numbered consecutively from `alphabet_size`.
  BpeModel(std::size_t alphabet_size, std::vector<BpeMerge> merges);

  std::size_t alphabet_size() const { return alphabet_size_; }
  const std::vector<BpeMerge>& merges() const { return merges_; }
  std::size_t vocab_size() const {
    return alphabet_size_ + merges_.size() + kSpecials;
  }
  Symbol sos() const { return static_cast<Symbol>(alphabet_size_ + merges_.size()); }
  Symbol eos() const { return sos() + 1; }
  Symbol pad() const { return sos() + 2; }
  bool is_special(Symbol s) const { return s >= sos() && s < vocab_size(); }

  /// Applies merges in training order, each exhaustively left to right
  /// without overlap. No sentinels are added.
  PseudoTokenSequence encode(const PseudoCharSequence& chars) const;
  /// Expands merged symbols back to characters. Sentinels must be stripped
  /// by the caller; they raise ArgumentError like any unknown id.
  PseudoCharSequence decode(const PseudoTokenSequence& tokens) const;

  /// Characters covered by `token`.
  std::span<const Symbol> expansion(Symbol token) const;

  bool operator==(const BpeModel& o) const {
    return alphabet_size_ == o.alphabet_size_ && merges_ == o.merges_;
  }

 private:
  std::size_t alphabet_size_ = 0;
  std::vector<BpeMerge> merges_;
  std::unordered_map<std::uint64_t, std::size_t> rank_;
  std::vector<std::vector<Symbol>> expansions_;
};

/// Greedy BPE training. Repeatedly merges the adjacent pair whose
/// non-overlapping occurrence count (summed within utterances) is highest,
/// breaking ties by lower left id, then lower right id. Stops when
/// vocab_size reaches `target_vocab` or no pair occurs at least twice.
BpeModel bpe_train(std::span<const PseudoCharSequence> corpus,
                   std::size_t alphabet_size, std::size_t target_vocab);

// Text format: `alphabet=C`, `specials=3`, then `left right -> new` per merge.
void write_bpe(std::ostream& os, const BpeModel& model);
void write_bpe(const std::filesystem::path& path, const BpeModel& model);
BpeModel read_bpe(std::istream& is);
BpeModel read_bpe(const std::filesystem::path& path);

}  // namespace pseudolang
