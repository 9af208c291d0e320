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

// Integer symbol sequences (cluster units, pseudo characters, pseudo
// subwords) and their shared text format: one utterance per line,
// `id<TAB>s1 s2 s3 ...`.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pseudolang {

using Symbol = std::uint32_t;

template <typename Tag>
struct SymbolSequence {
  std::string utterance_id;
  std::vector<Symbol> symbols;

  std::size_t size() const { return symbols.size(); }
  bool operator==(const SymbolSequence&) const = default;
};

struct UnitTag {};
struct CharTag {};
struct TokenTag {};

/// Raw k-means cluster indices, one per pooled frame.
using UnitSequence = SymbolSequence<UnitTag>;
/// Deduplicated cluster indices; no two adjacent symbols are equal.
using PseudoCharSequence = SymbolSequence<CharTag>;
/// Pseudo-subword ids produced by BPE.
using PseudoTokenSequence = SymbolSequence<TokenTag>;

template <typename Tag>
using SequenceCorpus = std::vector<SymbolSequence<Tag>>;

namespace detail {
struct RawSequence {
  std::string utterance_id;
  std::vector<Symbol> symbols;
};
void write_raw_sequences(std::ostream& os, const std::vector<RawSequence>& c);
std::vector<RawSequence> read_raw_sequences(std::istream& is,
                                            const std::string& source);
void write_text_file(const std::filesystem::path& path,
                     const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);
}  // namespace detail

template <typename Tag>
void write_sequences(std::ostream& os, const SequenceCorpus<Tag>& corpus) {
  std::vector<detail::RawSequence> raw;
  raw.reserve(corpus.size());
  for (const auto& s : corpus) raw.push_back({s.utterance_id, s.symbols});
  detail::write_raw_sequences(os, raw);
}

/// Parses the text format. Malformed lines and duplicate ids raise
/// FormatError.
template <typename Tag>
SequenceCorpus<Tag> read_sequences(std::istream& is,
                                   const std::string& source = "<stream>") {
  SequenceCorpus<Tag> out;
  for (auto& r : detail::read_raw_sequences(is, source)) {
    out.push_back({std::move(r.utterance_id), std::move(r.symbols)});
  }
  return out;
}

template <typename Tag>
void write_sequences(const std::filesystem::path& path,
                     const SequenceCorpus<Tag>& corpus);
template <typename Tag>
SequenceCorpus<Tag> read_sequences(const std::filesystem::path& path);

extern template void write_sequences<UnitTag>(const std::filesystem::path&,
                                              const SequenceCorpus<UnitTag>&);
extern template void write_sequences<CharTag>(const std::filesystem::path&,
                                              const SequenceCorpus<CharTag>&);
extern template void write_sequences<TokenTag>(
    const std::filesystem::path&, const SequenceCorpus<TokenTag>&);
extern template SequenceCorpus<UnitTag> read_sequences<UnitTag>(
    const std::filesystem::path&);
extern template SequenceCorpus<CharTag> read_sequences<CharTag>(
    const std::filesystem::path&);
extern template SequenceCorpus<TokenTag> read_sequences<TokenTag>(
    const std::filesystem::path&);

}  // namespace pseudolang
