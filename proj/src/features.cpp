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

#include "pseudolang/features.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "pseudolang/binary_io.hpp"
#include "pseudolang/error.hpp"

namespace pseudolang {

namespace fs = std::filesystem;

FeatureSequence FeatureSequence::from_rows(
    std::string id, const std::vector<std::vector<float>>& rows) {
  FeatureSequence seq;
  seq.utterance_id = std::move(id);
  if (rows.empty()) return seq;
  seq.dim = rows.front().size();
  seq.data.reserve(rows.size() * seq.dim);
  for (const auto& row : rows) {
    if (row.size() != seq.dim) {
      throw ArgumentError("from_rows: ragged frame in " + seq.utterance_id);
    }
    seq.data.insert(seq.data.end(), row.begin(), row.end());
  }
  return seq;
}

void FeatureSequence::validate() const {
  if (dim == 0) throw ArgumentError(utterance_id + ": feature dim must be > 0");
  if (data.empty() || data.size() % dim != 0) {
    throw ArgumentError(utterance_id + ": payload is not a whole number of " +
                        "frames (or empty)");
  }
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw ArgumentError(utterance_id + ": non-finite feature value");
    }
  }
}

void write_features(std::ostream& os, const FeatureSequence& seq) {
  seq.validate();
  binio::write_magic(os, std::string_view(kFeatureMagic, 4));
  binio::write_le<std::uint8_t>(os, kFeatureVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.dim));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.frames()));
  os.write(reinterpret_cast<const char*>(seq.data.data()),
           static_cast<std::streamsize>(seq.data.size() * sizeof(float)));
  if (!os) throw Error("write_features: stream write failed");
}

void write_features(const fs::path& path, const FeatureSequence& seq) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_features(os, seq);
}

FeatureSequence read_features(std::istream& is, std::string utterance_id) {
  binio::expect_magic(is, std::string_view(kFeatureMagic, 4), "feature file");
  const auto version = binio::read_le<std::uint8_t>(is, "version");
  if (version != kFeatureVersion) {
    throw FormatError("feature file: unsupported version " +
                      std::to_string(version));
  }
  const auto dim = binio::read_le<std::uint32_t>(is, "dim");
  const auto frames = binio::read_le<std::uint32_t>(is, "frame count");
  if (dim == 0) throw FormatError("feature file: dim is 0");
  if (frames == 0) throw FormatError("feature file: frame count is 0");

  std::string payload{std::istreambuf_iterator<char>(is),
                      std::istreambuf_iterator<char>()};
  const std::size_t floats = payload.size() / sizeof(float);
  if (payload.size() % sizeof(float) != 0 || floats % dim != 0) {
    throw CorruptionError("feature file " + utterance_id +
                          ": payload of " + std::to_string(floats) +
                          " floats is not a multiple of dim " +
                          std::to_string(dim));
  }
  if (floats != std::size_t{frames} * dim) {
    throw CorruptionError("feature file " + utterance_id + ": header says " +
                          std::to_string(frames) + " frames, payload holds " +
                          std::to_string(floats / dim));
  }

  FeatureSequence seq;
  seq.utterance_id = std::move(utterance_id);
  seq.dim = dim;
  seq.data.resize(floats);
  std::memcpy(seq.data.data(), payload.data(), payload.size());
  for (float v : seq.data) {
    if (!std::isfinite(v)) {
      throw CorruptionError("feature file " + seq.utterance_id +
                            ": non-finite value in payload");
    }
  }
  return seq;
}

FeatureSequence read_features(const fs::path& path, std::string utterance_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open feature file " + path.string());
  return read_features(is, std::move(utterance_id));
}

FeatureSequence read_features(const fs::path& path) {
  return read_features(path, path.stem().string());
}

FeatureSequence average_pool(const FeatureSequence& seq, std::size_t kernel) {
  if (kernel == 0) throw ArgumentError("average_pool: kernel must be >= 1");
  FeatureSequence out;
  out.utterance_id = seq.utterance_id;
  out.dim = seq.dim;
  const std::size_t m = seq.frames();
  const std::size_t windows = (m + kernel - 1) / kernel;
  out.data.resize(windows * seq.dim);
  std::vector<double> acc(seq.dim);
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t begin = w * kernel;
    const std::size_t end = std::min(begin + kernel, m);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = begin; t < end; ++t) {
      const auto f = seq.frame(t);
      for (std::size_t j = 0; j < seq.dim; ++j) acc[j] += f[j];
    }
    const double count = static_cast<double>(end - begin);
    auto dst = out.frame(w);
    for (std::size_t j = 0; j < seq.dim; ++j) {
      dst[j] = static_cast<float>(acc[j] / count);
    }
  }
  return out;
}

FeatureSequence standardize(const FeatureSequence& seq) {
  FeatureSequence out = seq;
  const std::size_t m = seq.frames();
  if (m == 0) return out;
  for (std::size_t j = 0; j < seq.dim; ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < m; ++t) mean += seq.frame(t)[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      const double d = seq.frame(t)[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < m; ++t) {
      out.frame(t)[j] = static_cast<float>((seq.frame(t)[j] - mean) * scale);
    }
  }
  return out;
}

FeatureSequence FeatureCorpus::load(std::size_t i) const {
  const auto& entry = manifest.at(i);
  auto seq = read_features(root / entry.path, entry.utterance_id);
  if (seq.frames() != entry.frames) {
    throw CorruptionError("utterance " + entry.utterance_id + ": manifest says " +
                          std::to_string(entry.frames) + " frames, file has " +
                          std::to_string(seq.frames()));
  }
  return seq;
}

std::vector<FeatureSequence> FeatureCorpus::load_all() const {
  std::vector<FeatureSequence> out;
  out.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) out.push_back(load(i));
  return out;
}

FeatureCorpus read_corpus(const fs::path& root) {
  const fs::path path = root / kManifestName;
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open manifest " + path.string());
  FeatureCorpus corpus;
  corpus.root = root;
  std::string line;
  if (!std::getline(is, line) || line != "id\tpath\tframes") {
    throw FormatError(path.string() + ": expected header 'id\\tpath\\tframes'");
  }
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected three tab-separated fields");
    }
    ManifestEntry entry;
    entry.utterance_id = line.substr(0, t1);
    entry.path = line.substr(t1 + 1, t2 - t1 - 1);
    try {
      std::size_t used = 0;
      const auto field = line.substr(t2 + 1);
      entry.frames = std::stoul(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": bad frame count");
    }
    if (!seen.insert(entry.utterance_id).second) {
      throw FormatError(path.string() + ": duplicate utterance id " +
                        entry.utterance_id);
    }
    corpus.manifest.push_back(std::move(entry));
  }
  return corpus;
}

FeatureCorpus write_corpus(const fs::path& root,
                           const std::vector<FeatureSequence>& seqs) {
  fs::create_directories(root / "feats");
  FeatureCorpus corpus;
  corpus.root = root;
  std::ostringstream manifest;
  manifest << "id\tpath\tframes\n";
  std::unordered_set<std::string> seen;
  for (const auto& seq : seqs) {
    if (!seen.insert(seq.utterance_id).second) {
      throw ArgumentError("write_corpus: duplicate utterance id " +
                          seq.utterance_id);
    }
    const std::string rel = "feats/" + seq.utterance_id + ".plft";
    write_features(root / rel, seq);
    manifest << seq.utterance_id << '\t' << rel << '\t' << seq.frames() << '\n';
    corpus.manifest.push_back({seq.utterance_id, rel, seq.frames()});
  }
  std::ofstream os(root / kManifestName, std::ios::trunc);
  os << manifest.str();
  if (!os) throw Error("cannot write manifest under " + root.string());
  return corpus;
}

}  // namespace pseudolang
