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

// Feature corpora: the continuous frame sequences the pseudo language is
// induced from, their on-disk format, and length-reducing average pooling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pseudolang {

/// A variable-length matrix of 32-bit frame vectors, stored frame-major.
struct FeatureSequence {
  std::string utterance_id;
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t frames() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> frame(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  std::span<float> frame(std::size_t i) { return {data.data() + i * dim, dim}; }

  bool operator==(const FeatureSequence&) const = default;

  static FeatureSequence from_rows(std::string id,
                                   const std::vector<std::vector<float>>& rows);

  /// Throws ArgumentError unless dim > 0, frames >= 1, the payload is a
  /// whole number of frames and every entry is finite.
  void validate() const;
};

// Binary layout: "PLFT", u8 version, u32 dim, u32 frames, f32 payload.
inline constexpr char kFeatureMagic[] = "PLFT";
inline constexpr std::uint8_t kFeatureVersion = 1;

void write_features(std::ostream& os, const FeatureSequence& seq);
void write_features(const std::filesystem::path& path,
                    const FeatureSequence& seq);

/// Reads one feature file. Header problems raise FormatError; a payload that
/// does not match the header (or holds NaN/Inf) raises CorruptionError.
FeatureSequence read_features(std::istream& is, std::string utterance_id);
FeatureSequence read_features(const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path,
                              std::string utterance_id);

/// Non-overlapping mean pooling with stride == kernel. A trailing partial
/// window is averaged over the frames it actually covers.
FeatureSequence average_pool(const FeatureSequence& seq, std::size_t kernel);

/// Per-utterance mean/variance normalisation of every dimension. Off by
/// default in the pipeline; frames are otherwise clustered as-is.
FeatureSequence standardize(const FeatureSequence& seq);

struct ManifestEntry {
  std::string utterance_id;
  std::string path;  // relative to the corpus root
  std::size_t frames = 0;
};

/// A directory of feature files indexed by `manifest.tsv`.
struct FeatureCorpus {
  std::filesystem::path root;
  std::vector<ManifestEntry> manifest;

  std::size_t size() const { return manifest.size(); }
  /// Loads utterance `i`, checking the manifest frame count.
  FeatureSequence load(std::size_t i) const;
  std::vector<FeatureSequence> load_all() const;
};

inline constexpr char kManifestName[] = "manifest.tsv";

/// Parses `root/manifest.tsv` (header `id\tpath\tframes`). Duplicate ids are
/// a FormatError. File contents are checked lazily by `load`.
FeatureCorpus read_corpus(const std::filesystem::path& root);

/// Writes every sequence to `root/feats/<id>.plft` plus the manifest.
FeatureCorpus write_corpus(const std::filesystem::path& root,
                           const std::vector<FeatureSequence>& seqs);

}  // namespace pseudolang
