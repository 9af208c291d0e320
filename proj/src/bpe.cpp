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

#include "pseudolang/bpe.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "pseudolang/error.hpp"

namespace pseudolang {

namespace {

std::uint64_t pair_key(Symbol a, Symbol b) {
  return (std::uint64_t{a} << 32) | b;
}

// Non-overlapping occurrence counts of every adjacent pair. A run of r equal
// symbols x contributes r/2 to (x, x); each boundary between runs
// contributes 1 to (x, y).
void count_pairs(const std::vector<Symbol>& w, std::int64_t weight,
                 std::map<std::uint64_t, std::int64_t>& out) {
  std::size_t i = 0;
  while (i < w.size()) {
    std::size_t j = i;
    while (j + 1 < w.size() && w[j + 1] == w[i]) ++j;
    const std::size_t run = j - i + 1;
    if (run >= 2) out[pair_key(w[i], w[i])] += weight * static_cast<std::int64_t>(run / 2);
    if (j + 1 < w.size()) out[pair_key(w[i], w[j + 1])] += weight;
    i = j + 1;
  }
}

bool merge_in_place(std::vector<Symbol>& w, Symbol left, Symbol right,
                    Symbol result) {
  bool any = false;
  std::size_t out = 0;
  for (std::size_t i = 0; i < w.size();) {
    if (i + 1 < w.size() && w[i] == left && w[i + 1] == right) {
      w[out++] = result;
      i += 2;
      any = true;
    } else {
      w[out++] = w[i++];
    }
  }
  w.resize(out);
  return any;
}

}  // namespace

BpeModel::BpeModel(std::size_t alphabet_size, std::vector<BpeMerge> merges)
    : alphabet_size_(alphabet_size), merges_(std::move(merges)) {
  if (alphabet_size_ == 0) throw ArgumentError("BpeModel: empty alphabet");
  expansions_.resize(alphabet_size_ + merges_.size());
  for (std::size_t c = 0; c < alphabet_size_; ++c) {
    expansions_[c] = {static_cast<Symbol>(c)};
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& m = merges_[r];
    const std::size_t expected = alphabet_size_ + r;
    if (m.result != expected || m.left >= expected || m.right >= expected) {
      throw FormatError("BpeModel: merge " + std::to_string(r) +
                        " references an id that does not exist yet");
    }
    if (!rank_.emplace(pair_key(m.left, m.right), r).second) {
      throw FormatError("BpeModel: duplicate merge pair at rank " +
                        std::to_string(r));
    }
    auto& e = expansions_[m.result];
    e = expansions_[m.left];
    e.insert(e.end(), expansions_[m.right].begin(), expansions_[m.right].end());
  }
}

std::span<const Symbol> BpeModel::expansion(Symbol token) const {
  if (token >= expansions_.size()) {
    throw ArgumentError("bpe: id " + std::to_string(token) +
                        " is not a character or merge");
  }
  return expansions_[token];
}

PseudoTokenSequence BpeModel::encode(const PseudoCharSequence& chars) const {
  PseudoTokenSequence out;
  out.utterance_id = chars.utterance_id;
  out.symbols = chars.symbols;
  for (Symbol s : out.symbols) {
    if (s >= alphabet_size_) {
      throw ArgumentError("bpe_encode: " + chars.utterance_id + " holds symbol " +
                          std::to_string(s) + " outside alphabet of size " +
                          std::to_string(alphabet_size_));
    }
  }
  // Lowest-ranked present pair first. A merge only creates adjacencies
  // involving its (higher-id) result, so this visits merges in training
  // order and never revisits one.
  auto& w = out.symbols;
  while (w.size() >= 2) {
    std::size_t best = merges_.size();
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      auto it = rank_.find(pair_key(w[i], w[i + 1]));
      if (it != rank_.end() && it->second < best) best = it->second;
    }
    if (best == merges_.size()) break;
    const auto& m = merges_[best];
    merge_in_place(w, m.left, m.right, m.result);
  }
  return out;
}

PseudoCharSequence BpeModel::decode(const PseudoTokenSequence& tokens) const {
  PseudoCharSequence out;
  out.utterance_id = tokens.utterance_id;
  for (Symbol t : tokens.symbols) {
    const auto e = expansion(t);
    out.symbols.insert(out.symbols.end(), e.begin(), e.end());
  }
  return out;
}

BpeModel bpe_train(std::span<const PseudoCharSequence> corpus,
                   std::size_t alphabet_size, std::size_t target_vocab) {
  if (alphabet_size == 0) throw ArgumentError("bpe_train: empty alphabet");
  const std::size_t minimum = alphabet_size + BpeModel::kSpecials;
  if (target_vocab < minimum) {
    throw ArgumentError("bpe_train: target vocab " + std::to_string(target_vocab) +
                        " below minimum " + std::to_string(minimum));
  }
  const std::size_t budget = target_vocab - minimum;

  // Identical utterances are trained on once, weighted by multiplicity.
  std::map<std::vector<Symbol>, std::int64_t> unique;
  for (const auto& seq : corpus) {
    for (Symbol s : seq.symbols) {
      if (s >= alphabet_size) {
        throw ArgumentError("bpe_train: " + seq.utterance_id + " holds symbol " +
                            std::to_string(s) + " outside the alphabet");
      }
    }
    if (seq.symbols.size() >= 2) ++unique[seq.symbols];
  }
  std::vector<std::vector<Symbol>> words;
  std::vector<std::int64_t> freq;
  for (auto& [w, f] : unique) {
    words.push_back(w);
    freq.push_back(f);
  }

  std::map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  for (std::uint32_t i = 0; i < words.size(); ++i) {
    std::map<std::uint64_t, std::int64_t> local;
    count_pairs(words[i], 1, local);
    for (auto [key, c] : local) {
      counts[key] += c * freq[i];
      where[key].push_back(i);
    }
  }
  // Ordered by (count desc, left asc, right asc).
  using Entry = std::tuple<std::int64_t, std::uint64_t>;
  std::set<Entry> queue;
  for (auto [key, c] : counts) queue.emplace(-c, key);

  auto adjust = [&](std::uint64_t key, std::int64_t delta) {
    if (delta == 0) return;
    auto& c = counts[key];
    if (c > 0) queue.erase({-c, key});
    c += delta;
    if (c > 0) queue.emplace(-c, key);
  };

  std::vector<BpeMerge> merges;
  while (merges.size() < budget && !queue.empty()) {
    const auto [neg_count, key] = *queue.begin();
    if (-neg_count < 2) break;
    const Symbol left = static_cast<Symbol>(key >> 32);
    const Symbol right = static_cast<Symbol>(key & 0xffffffffu);
    const Symbol result = static_cast<Symbol>(alphabet_size + merges.size());
    merges.push_back({left, right, result});

    auto affected = std::move(where[key]);
    where.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (std::uint32_t wi : affected) {
      auto& w = words[wi];
      std::map<std::uint64_t, std::int64_t> before;
      count_pairs(w, 1, before);
      if (!merge_in_place(w, left, right, result)) continue;
      std::map<std::uint64_t, std::int64_t> after;
      count_pairs(w, 1, after);
      for (auto [k, c] : before) {
        const auto it = after.find(k);
        adjust(k, ((it == after.end() ? 0 : it->second) - c) * freq[wi]);
      }
      for (auto [k, c] : after) {
        if (!before.count(k)) {
          adjust(k, c * freq[wi]);
          where[k].push_back(wi);
        }
      }
    }
  }
  return BpeModel(alphabet_size, std::move(merges));
}

void write_bpe(std::ostream& os, const BpeModel& model) {
  os << "alphabet=" << model.alphabet_size() << '\n'
     << "specials=" << BpeModel::kSpecials << '\n';
  for (const auto& m : model.merges()) {
    os << m.left << ' ' << m.right << " -> " << m.result << '\n';
  }
}

void write_bpe(const std::filesystem::path& path, const BpeModel& model) {
  std::ostringstream os;
  write_bpe(os, model);
  detail::write_text_file(path, os.str());
}

BpeModel read_bpe(std::istream& is) {
  std::string line;
  auto header = [&](const std::string& key) -> std::size_t {
    if (!std::getline(is, line) || line.rfind(key + "=", 0) != 0) {
      throw FormatError("bpe model: expected '" + key + "=' header");
    }
    try {
      return std::stoul(line.substr(key.size() + 1));
    } catch (const std::logic_error&) {
      throw FormatError("bpe model: bad value in '" + line + "'");
    }
  };
  const std::size_t alphabet = header("alphabet");
  if (header("specials") != BpeModel::kSpecials) {
    throw FormatError("bpe model: only 3 specials are supported");
  }
  std::vector<BpeMerge> merges;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    BpeMerge m;
    std::string arrow;
    if (!(ls >> m.left >> m.right >> arrow >> m.result) || arrow != "->") {
      throw FormatError("bpe model: bad merge line '" + line + "'");
    }
    merges.push_back(m);
  }
  return BpeModel(alphabet, std::move(merges));
}

BpeModel read_bpe(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open bpe model " + path.string());
  return read_bpe(is);
}

}  // namespace pseudolang
