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

// Pseudo-language induction: pooled features -> cluster units -> deduplicated
// pseudo characters -> BPE pseudo subwords, plus length statistics for each
// stage.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pseudolang/bpe.hpp"
#include "pseudolang/clustering.hpp"
#include "pseudolang/features.hpp"
#include "pseudolang/sequence.hpp"

namespace pseudolang {

/// Collapses maximal runs of equal adjacent units, so "k k t t t" -> "k t".
PseudoCharSequence deduplicate(const UnitSequence& units);

/// Token-count totals over a corpus. Ratios are relative to raw_len.
struct CompressionReport {
  std::size_t utterances = 0;
  std::size_t raw_len = 0;
  std::size_t dedup_len = 0;
  std::size_t subword_len = 0;

  double dedup_ratio() const;
  double subword_ratio() const;
  bool operator==(const CompressionReport&) const = default;
};

/// Sums lengths over corpora keyed by utterance id. Ids listed in
/// `sentinels` are not counted in the token corpus. Mismatched utterance
/// sets raise ArgumentError.
CompressionReport compression_report(std::span<const UnitSequence> raw,
                                     std::span<const PseudoCharSequence> dedup,
                                     std::span<const PseudoTokenSequence> tokens,
                                     std::span<const Symbol> sentinels = {});

/// Flat `key=value` lines, one per field.
void write_report(std::ostream& os, const CompressionReport& report);
std::string format_report(const CompressionReport& report);
CompressionReport parse_report(const std::string& text);

struct InductionOptions {
  std::size_t kernel = 2;
  bool standardize = false;
};

struct InducedCorpus {
  std::vector<UnitSequence> units;
  std::vector<PseudoCharSequence> chars;
  std::vector<PseudoTokenSequence> tokens;
  CompressionReport report;
};

/// Pools, predicts, deduplicates, then encodes one utterance.
PseudoTokenSequence induce_one(const FeatureSequence& seq,
                               const InductionOptions& opts,
                               const KMeansModel& kmeans, const BpeModel& bpe,
                               UnitSequence* units = nullptr,
                               PseudoCharSequence* chars = nullptr);

/// Runs induce_one over the corpus in manifest order. Component errors are
/// re-raised with the utterance id prepended.
InducedCorpus induce_corpus(const FeatureCorpus& features,
                            const InductionOptions& opts,
                            const KMeansModel& kmeans, const BpeModel& bpe);
InducedCorpus induce_corpus(std::span<const FeatureSequence> features,
                            const InductionOptions& opts,
                            const KMeansModel& kmeans, const BpeModel& bpe);

}  // namespace pseudolang
