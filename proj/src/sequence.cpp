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

#include "pseudolang/sequence.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "pseudolang/error.hpp"

namespace pseudolang {
namespace detail {

void write_raw_sequences(std::ostream& os, const std::vector<RawSequence>& c) {
  for (const auto& s : c) {
    os << s.utterance_id << '\t';
    for (std::size_t i = 0; i < s.symbols.size(); ++i) {
      if (i) os << ' ';
      os << s.symbols[i];
    }
    os << '\n';
  }
}

std::vector<RawSequence> read_raw_sequences(std::istream& is,
                                            const std::string& source) {
  std::vector<RawSequence> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw FormatError(source + ":" + std::to_string(lineno) +
                        ": expected 'id<TAB>symbols'");
    }
    RawSequence seq;
    seq.utterance_id = line.substr(0, tab);
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      if (*p == ' ') {
        ++p;
        continue;
      }
      Symbol value = 0;
      auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc() || (next < end && *next != ' ')) {
        throw FormatError(source + ":" + std::to_string(lineno) +
                          ": bad symbol");
      }
      seq.symbols.push_back(value);
      p = next;
    }
    if (!seen.insert(seq.utterance_id).second) {
      throw FormatError(source + ": duplicate utterance id " +
                        seq.utterance_id);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& contents) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << contents;
  if (!os) throw Error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace detail

template <typename Tag>
void write_sequences(const std::filesystem::path& path,
                     const SequenceCorpus<Tag>& corpus) {
  std::ostringstream os;
  write_sequences(os, corpus);
  detail::write_text_file(path, os.str());
}

template <typename Tag>
SequenceCorpus<Tag> read_sequences(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_sequences<Tag>(is, path.string());
}

template void write_sequences<UnitTag>(const std::filesystem::path&,
                                       const SequenceCorpus<UnitTag>&);
template void write_sequences<CharTag>(const std::filesystem::path&,
                                       const SequenceCorpus<CharTag>&);
template void write_sequences<TokenTag>(const std::filesystem::path&,
                                        const SequenceCorpus<TokenTag>&);
template SequenceCorpus<UnitTag> read_sequences<UnitTag>(
    const std::filesystem::path&);
template SequenceCorpus<CharTag> read_sequences<CharTag>(
    const std::filesystem::path&);
template SequenceCorpus<TokenTag> read_sequences<TokenTag>(
    const std::filesystem::path&);

}  // namespace pseudolang
