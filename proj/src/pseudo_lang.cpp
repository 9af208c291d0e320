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

#include "pseudolang/pseudo_lang.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "pseudolang/error.hpp"

namespace pseudolang {

PseudoCharSequence deduplicate(const UnitSequence& units) {
  PseudoCharSequence out;
  out.utterance_id = units.utterance_id;
  for (Symbol u : units.symbols) {
    if (out.symbols.empty() || out.symbols.back() != u) out.symbols.push_back(u);
  }
  return out;
}

double CompressionReport::dedup_ratio() const {
  return raw_len == 0 ? 1.0
                      : static_cast<double>(dedup_len) / static_cast<double>(raw_len);
}

double CompressionReport::subword_ratio() const {
  return raw_len == 0 ? 1.0
                      : static_cast<double>(subword_len) / static_cast<double>(raw_len);
}

CompressionReport compression_report(std::span<const UnitSequence> raw,
                                     std::span<const PseudoCharSequence> dedup,
                                     std::span<const PseudoTokenSequence> tokens,
                                     std::span<const Symbol> sentinels) {
  std::unordered_map<std::string, std::size_t> dedup_len, token_len;
  for (const auto& s : dedup) dedup_len[s.utterance_id] = s.size();
  for (const auto& s : tokens) {
    token_len[s.utterance_id] = static_cast<std::size_t>(
        std::count_if(s.symbols.begin(), s.symbols.end(), [&](Symbol x) {
          return std::find(sentinels.begin(), sentinels.end(), x) ==
                 sentinels.end();
        }));
  }
  if (dedup_len.size() != raw.size() || token_len.size() != raw.size()) {
    throw ArgumentError("compression_report: corpora hold different utterance sets");
  }
  CompressionReport report;
  for (const auto& s : raw) {
    const auto d = dedup_len.find(s.utterance_id);
    const auto t = token_len.find(s.utterance_id);
    if (d == dedup_len.end() || t == token_len.end()) {
      throw ArgumentError("compression_report: utterance " + s.utterance_id +
                          " missing from a corpus");
    }
    ++report.utterances;
    report.raw_len += s.size();
    report.dedup_len += d->second;
    report.subword_len += t->second;
  }
  return report;
}

std::string format_report(const CompressionReport& r) {
  return fmt::format(
      "utterances={}\nraw_len={}\ndedup_len={}\nsubword_len={}\n"
      "dedup_ratio={:.6f}\nsubword_ratio={:.6f}\n",
      r.utterances, r.raw_len, r.dedup_len, r.subword_len, r.dedup_ratio(),
      r.subword_ratio());
}

void write_report(std::ostream& os, const CompressionReport& report) {
  os << format_report(report);
}

CompressionReport parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> std::size_t {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("report: missing ") + key);
    return std::stoul(it->second);
  };
  CompressionReport r;
  r.utterances = get("utterances");
  r.raw_len = get("raw_len");
  r.dedup_len = get("dedup_len");
  r.subword_len = get("subword_len");
  return r;
}

PseudoTokenSequence induce_one(const FeatureSequence& seq,
                               const InductionOptions& opts,
                               const KMeansModel& kmeans, const BpeModel& bpe,
                               UnitSequence* units_out,
                               PseudoCharSequence* chars_out) {
  FeatureSequence pooled = average_pool(seq, opts.kernel);
  if (opts.standardize) pooled = standardize(pooled);
  UnitSequence units = predict(kmeans, pooled);
  PseudoCharSequence chars = deduplicate(units);
  PseudoTokenSequence tokens = bpe.encode(chars);
  if (units_out) *units_out = std::move(units);
  if (chars_out) *chars_out = std::move(chars);
  return tokens;
}

namespace {

template <typename LoadFn>
InducedCorpus induce_impl(std::size_t n, LoadFn&& load,
                          const InductionOptions& opts,
                          const KMeansModel& kmeans, const BpeModel& bpe) {
  InducedCorpus out;
  out.units.resize(n);
  out.chars.resize(n);
  out.tokens.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string id;
    try {
      const FeatureSequence seq = load(i, id);
      out.tokens[i] = induce_one(seq, opts, kmeans, bpe, &out.units[i], &out.chars[i]);
    } catch (const FormatError& e) {
      throw FormatError("utterance " + id + ": " + e.what());
    } catch (const CorruptionError& e) {
      throw CorruptionError("utterance " + id + ": " + e.what());
    } catch (const ArgumentError& e) {
      throw ArgumentError("utterance " + id + ": " + e.what());
    }
  }
  out.report = compression_report(out.units, out.chars, out.tokens);
  return out;
}

}  // namespace

InducedCorpus induce_corpus(const FeatureCorpus& features,
                            const InductionOptions& opts,
                            const KMeansModel& kmeans, const BpeModel& bpe) {
  return induce_impl(
      features.size(),
      [&](std::size_t i, std::string& id) {
        id = features.manifest[i].utterance_id;
        return features.load(i);
      },
      opts, kmeans, bpe);
}

InducedCorpus induce_corpus(std::span<const FeatureSequence> features,
                            const InductionOptions& opts,
                            const KMeansModel& kmeans, const BpeModel& bpe) {
  return induce_impl(
      features.size(),
      [&](std::size_t i, std::string& id) {
        id = features[i].utterance_id;
        return features[i];
      },
      opts, kmeans, bpe);
}

}  // namespace pseudolang
