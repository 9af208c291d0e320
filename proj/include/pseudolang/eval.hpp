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

// Levenshtein alignment and corpus-level error rates (WER-style scoring over
// any token alphabet).

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pseudolang/sequence.hpp"

namespace pseudolang {

struct EditCounts {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  bool operator==(const EditCounts&) const = default;
};

/// Unit-cost edit distance with an operation breakdown. The traceback prefers
/// match/substitution, then deletion, then insertion when several optimal
/// predecessors exist.
EditCounts edit_distance(std::span<const Symbol> ref, std::span<const Symbol> hyp);

struct UtteranceScore {
  std::string utterance_id;
  std::size_t reference_len = 0;
  EditCounts edits;
};

struct ErrorRateReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_len = 0;
  std::vector<UtteranceScore> utterances;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  /// Pooled rate: total edits over total reference length.
  double rate() const;
};

/// Scores every reference utterance against the hypothesis with the same
/// id. A missing hypothesis counts as empty; hypotheses without a reference
/// raise ArgumentError, as does an empty reference corpus.
ErrorRateReport error_rate(std::span<const PseudoTokenSequence> refs,
                           std::span<const PseudoTokenSequence> hyps);

/// `key=value` summary block.
std::string format_error_report(const ErrorRateReport& report);
/// TSV with header `id\tref_len\tdistance\tsub\tins\tdel`.
std::string format_utterance_scores(const ErrorRateReport& report);

}  // namespace pseudolang
