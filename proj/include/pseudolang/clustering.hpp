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

// k-means discretisation of pooled frames into cluster indices.
//
// Two fitters share the model type: mini-batch k-means (the production path)
// and full-batch Lloyd iterations, which serve as a reference for it. Both
// start from k-means++ seeding and use squared Euclidean distance.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pseudolang/features.hpp"
#include "pseudolang/sequence.hpp"

namespace pseudolang {

/// A dense row-major set of frame vectors.
struct FrameMatrix {
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }

  static FrameMatrix from_rows(const std::vector<std::vector<float>>& rows);
  /// Concatenates the frames of every sequence, in order.
  static FrameMatrix stack(std::span<const FeatureSequence> seqs);
};

struct KMeansModel {
  std::size_t dim = 0;
  std::vector<float> centroids;       // clusters() x dim, row-major
  std::vector<std::uint64_t> counts;  // accumulated assignment counts
  std::uint64_t seed = 0;
  std::vector<double> inertia_history;

  std::size_t clusters() const { return dim == 0 ? 0 : centroids.size() / dim; }
  std::span<const float> centroid(std::size_t i) const {
    return {centroids.data() + i * dim, dim};
  }

  /// Index of the nearest centroid; ties go to the lowest index.
  Symbol nearest(std::span<const float> frame) const;
};

/// k-means++ seeding: the first center is uniform over `sample`, each further
/// center is drawn with probability proportional to its squared distance to
/// the closest center chosen so far.
FrameMatrix kmeanspp_init(const FrameMatrix& sample, std::size_t clusters,
                          std::uint64_t seed);

struct MiniBatchOptions {
  std::size_t clusters = 500;
  std::size_t batch_size = 10000;
  std::size_t iterations = 100;
  std::uint64_t seed = 0;
  // Seeding runs on a random subset of this many rows (all rows if fewer).
  std::size_t init_size = 30000;
};

/// Mini-batch k-means. Each iteration takes the next slice of a per-epoch
/// shuffle, assigns it against the current centroids, then moves each
/// assigned centroid toward its point with step 1/count. A centroid that
/// receives no assignment over a full epoch is moved onto the batch point
/// farthest from its own centroid.
KMeansModel minibatch_fit(const FrameMatrix& data, const MiniBatchOptions& opts,
                          const std::optional<FrameMatrix>& init = std::nullopt);

/// Full-batch Lloyd iterations from k-means++ seeding. Stops when the
/// assignment no longer changes or after `max_iter` assignment steps.
KMeansModel lloyd_fit(const FrameMatrix& data, std::size_t clusters,
                      std::uint64_t seed, std::size_t max_iter);

/// Sum of squared distances from every row to its nearest centroid.
double inertia(const KMeansModel& model, const FrameMatrix& data);

UnitSequence predict(const KMeansModel& model, const FeatureSequence& seq);

inline constexpr char kKMeansMagic[] = "PLKM";
inline constexpr std::uint8_t kKMeansVersion = 1;

// "PLKM", u8 version, u32 C, u32 dim, u64 seed, f32 centroids row-major.
void write_kmeans(std::ostream& os, const KMeansModel& model);
void write_kmeans(const std::filesystem::path& path, const KMeansModel& model);
KMeansModel read_kmeans(std::istream& is);
KMeansModel read_kmeans(const std::filesystem::path& path);

}  // namespace pseudolang
