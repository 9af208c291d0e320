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

#include "pseudolang/eval.hpp"

#include <unordered_map>

#include <fmt/format.h>

#include "pseudolang/error.hpp"

namespace pseudolang {

EditCounts edit_distance(std::span<const Symbol> ref, std::span<const Symbol> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  const std::size_t w = m + 1;
  std::vector<std::size_t> cost((n + 1) * w);
  for (std::size_t i = 0; i <= n; ++i) cost[i * w] = i;
  for (std::size_t j = 0; j <= m; ++j) cost[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = cost[(i - 1) * w + j - 1] + (ref[i - 1] != hyp[j - 1]);
      const std::size_t del = cost[(i - 1) * w + j] + 1;
      const std::size_t ins = cost[i * w + j - 1] + 1;
      cost[i * w + j] = std::min({diag, del, ins});
    }
  }

  EditCounts out;
  out.distance = cost[n * w + m];
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = cost[i * w + j];
    if (i > 0 && j > 0 &&
        here == cost[(i - 1) * w + j - 1] + (ref[i - 1] != hyp[j - 1])) {
      out.substitutions += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && here == cost[(i - 1) * w + j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

double ErrorRateReport::rate() const {
  return reference_len == 0
             ? 0.0
             : static_cast<double>(errors()) / static_cast<double>(reference_len);
}

ErrorRateReport error_rate(std::span<const PseudoTokenSequence> refs,
                           std::span<const PseudoTokenSequence> hyps) {
  if (refs.empty()) throw ArgumentError("error_rate: empty reference corpus");
  std::unordered_map<std::string, const PseudoTokenSequence*> by_id;
  for (const auto& h : hyps) by_id[h.utterance_id] = &h;
  std::size_t matched = 0;
  ErrorRateReport report;
  static const std::vector<Symbol> kEmpty;
  for (const auto& r : refs) {
    const auto it = by_id.find(r.utterance_id);
    const std::vector<Symbol>& hyp = it == by_id.end() ? kEmpty : it->second->symbols;
    matched += it != by_id.end();
    UtteranceScore score{r.utterance_id, r.size(), edit_distance(r.symbols, hyp)};
    report.substitutions += score.edits.substitutions;
    report.insertions += score.edits.insertions;
    report.deletions += score.edits.deletions;
    report.reference_len += r.size();
    report.utterances.push_back(std::move(score));
  }
  if (matched != by_id.size()) {
    throw ArgumentError("error_rate: hypotheses contain utterances with no reference");
  }
  if (report.reference_len == 0) {
    throw ArgumentError("error_rate: references are all empty; rate undefined");
  }
  return report;
}

std::string format_error_report(const ErrorRateReport& r) {
  return fmt::format(
      "utterances={}\nreference_len={}\nsubstitutions={}\ninsertions={}\n"
      "deletions={}\nerrors={}\nrate={:.6f}\n",
      r.utterances.size(), r.reference_len, r.substitutions, r.insertions,
      r.deletions, r.errors(), r.rate());
}

std::string format_utterance_scores(const ErrorRateReport& r) {
  std::string out = "id\tref_len\tdistance\tsub\tins\tdel\n";
  for (const auto& u : r.utterances) {
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", u.utterance_id, u.reference_len,
                       u.edits.distance, u.edits.substitutions,
                       u.edits.insertions, u.edits.deletions);
  }
  return out;
}

}  // namespace pseudolang
