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

#include "pseudolang/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "pseudolang/binary_io.hpp"
#include "pseudolang/error.hpp"

namespace pseudolang {

namespace {

double squared_distance(std::span<const float> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - b[j];
    acc += d * d;
  }
  return acc;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += d * d;
  }
  return acc;
}

// Working centroids are kept in double while fitting.
struct Centers {
  std::size_t dim;
  std::vector<double> data;

  std::size_t size() const { return data.size() / dim; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }

  std::pair<std::size_t, double> nearest(std::span<const float> x) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < size(); ++c) {
      const double d = squared_distance(x, row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return {best, best_d};
  }
};

Centers to_centers(const FrameMatrix& m) {
  return {m.dim, std::vector<double>(m.data.begin(), m.data.end())};
}

KMeansModel to_model(const Centers& centers, std::uint64_t seed) {
  KMeansModel model;
  model.dim = centers.dim;
  model.seed = seed;
  model.centroids.reserve(centers.data.size());
  for (double v : centers.data) model.centroids.push_back(static_cast<float>(v));
  return model;
}

std::size_t count_distinct(const FrameMatrix& m, std::size_t stop_at) {
  std::vector<std::size_t> idx(m.rows());
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    const auto ra = m.row(a), rb = m.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(),
                                        rb.end());
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size() && distinct < stop_at; ++i) {
    if (less(idx[i - 1], idx[i])) ++distinct;
  }
  return distinct;
}

void check_dims(const FrameMatrix& m, const char* who) {
  if (m.dim == 0 || m.data.size() % m.dim != 0) {
    throw ArgumentError(std::string(who) + ": malformed frame matrix");
  }
}

}  // namespace

FrameMatrix FrameMatrix::from_rows(const std::vector<std::vector<float>>& rows) {
  FrameMatrix m;
  if (rows.empty()) return m;
  m.dim = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != m.dim) throw ArgumentError("FrameMatrix: ragged rows");
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

FrameMatrix FrameMatrix::stack(std::span<const FeatureSequence> seqs) {
  FrameMatrix m;
  for (const auto& s : seqs) {
    if (m.dim == 0) m.dim = s.dim;
    if (s.dim != m.dim) {
      throw ArgumentError("stack: dim mismatch at " + s.utterance_id);
    }
    m.data.insert(m.data.end(), s.data.begin(), s.data.end());
  }
  return m;
}

Symbol KMeansModel::nearest(std::span<const float> frame) const {
  Symbol best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < clusters(); ++c) {
    const double d = squared_distance(frame, centroid(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<Symbol>(c);
    }
  }
  return best;
}

FrameMatrix kmeanspp_init(const FrameMatrix& sample, std::size_t clusters,
                          std::uint64_t seed) {
  check_dims(sample, "kmeanspp_init");
  if (clusters == 0) throw ArgumentError("kmeanspp_init: clusters must be > 0");
  const std::size_t n = sample.rows();
  if (n < clusters || count_distinct(sample, clusters) < clusters) {
    throw DegenerateInputError("kmeanspp_init: fewer than " +
                               std::to_string(clusters) + " distinct points");
  }

  std::mt19937_64 rng(seed);
  FrameMatrix centers;
  centers.dim = sample.dim;
  centers.data.reserve(clusters * sample.dim);

  auto take = [&](std::size_t i) {
    const auto r = sample.row(i);
    centers.data.insert(centers.data.end(), r.begin(), r.end());
  };

  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t chosen = first(rng);
  take(chosen);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(sample.row(i), sample.row(chosen));
  }
  while (centers.rows() < clusters) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) {
      throw DegenerateInputError("kmeanspp_init: all points already covered");
    }
    std::uniform_real_distribution<double> draw(0.0, total);
    const double r = draw(rng);
    double cum = 0.0;
    chosen = n;
    std::size_t last_positive = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      last_positive = i;
      cum += d2[i];
      if (r < cum) {
        chosen = i;
        break;
      }
    }
    if (chosen == n) chosen = last_positive;  // r landed on the rounding edge
    take(chosen);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(sample.row(i), sample.row(chosen)));
    }
  }
  return centers;
}

KMeansModel minibatch_fit(const FrameMatrix& data, const MiniBatchOptions& opts,
                          const std::optional<FrameMatrix>& init) {
  if (data.rows() == 0) throw ArgumentError("minibatch_fit: empty corpus");
  check_dims(data, "minibatch_fit");
  if (opts.clusters == 0 || opts.batch_size == 0 || opts.iterations == 0) {
    throw ArgumentError(
        "minibatch_fit: clusters, batch_size and iterations must be > 0");
  }
  const std::size_t n = data.rows();
  const std::size_t k = opts.clusters;
  std::mt19937_64 rng(opts.seed);

  Centers centers;
  if (init) {
    if (init->dim != data.dim || init->rows() != k) {
      throw ArgumentError("minibatch_fit: initial centroids have wrong shape");
    }
    centers = to_centers(*init);
  } else {
    const std::uint64_t init_seed = rng();
    if (n <= opts.init_size) {
      centers = to_centers(kmeanspp_init(data, k, init_seed));
    } else {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < opts.init_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      std::sort(idx.begin(), idx.begin() + static_cast<long>(opts.init_size));
      FrameMatrix sample;
      sample.dim = data.dim;
      for (std::size_t i = 0; i < opts.init_size; ++i) {
        const auto r = data.row(idx[i]);
        sample.data.insert(sample.data.end(), r.begin(), r.end());
      }
      centers = to_centers(kmeanspp_init(sample, k, init_seed));
    }
  }

  std::vector<std::uint64_t> counts(k, 0);
  std::vector<std::uint64_t> epoch_hits(k, 0);
  std::vector<double> history;
  history.reserve(opts.iterations);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t pos = 0;

  std::vector<std::size_t> batch;
  std::vector<std::size_t> assign;
  std::vector<double> dist;

  // Moves every centroid with zero hits onto the batch point farthest from
  // its assigned centroid, using each batch point at most once.
  auto reseed_dead = [&](const std::vector<std::uint64_t>& hits) {
    std::vector<std::size_t> by_distance(batch.size());
    std::iota(by_distance.begin(), by_distance.end(), 0);
    std::stable_sort(by_distance.begin(), by_distance.end(),
                     [&](std::size_t a, std::size_t b) {
                       return dist[a] > dist[b];
                     });
    std::size_t next = 0;
    for (std::size_t c = 0; c < k && next < by_distance.size(); ++c) {
      if (hits[c] != 0) continue;
      const auto x = data.row(batch[by_distance[next++]]);
      auto dst = centers.row(c);
      for (std::size_t j = 0; j < data.dim; ++j) dst[j] = x[j];
      counts[c] = std::max<std::uint64_t>(counts[c], 1);
    }
  };

  for (std::size_t it = 0; it < opts.iterations; ++it) {
    const std::size_t end = std::min(pos + opts.batch_size, n);
    batch.assign(order.begin() + static_cast<long>(pos),
                 order.begin() + static_cast<long>(end));
    pos = end;

    // Assignment against the centroids as they stood at batch start.
    assign.resize(batch.size());
    dist.resize(batch.size());
    double batch_inertia = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto [c, d] = centers.nearest(data.row(batch[b]));
      assign[b] = c;
      dist[b] = d;
      batch_inertia += d;
    }
    history.push_back(batch_inertia);

    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t c = assign[b];
      ++counts[c];
      ++epoch_hits[c];
      const double eta = 1.0 / static_cast<double>(counts[c]);
      const auto x = data.row(batch[b]);
      auto ctr = centers.row(c);
      for (std::size_t j = 0; j < data.dim; ++j) ctr[j] += eta * (x[j] - ctr[j]);
    }

    if (pos == n) {
      reseed_dead(epoch_hits);
      std::fill(epoch_hits.begin(), epoch_hits.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      pos = 0;
    }
  }
  // Centroids never assigned at all are reseeded from the final batch.
  reseed_dead(counts);

  KMeansModel model = to_model(centers, opts.seed);
  model.counts = std::move(counts);
  model.inertia_history = std::move(history);
  return model;
}

KMeansModel lloyd_fit(const FrameMatrix& data, std::size_t clusters,
                      std::uint64_t seed, std::size_t max_iter) {
  check_dims(data, "lloyd_fit");
  if (max_iter == 0) throw ArgumentError("lloyd_fit: max_iter must be > 0");
  Centers centers = to_centers(kmeanspp_init(data, clusters, seed));
  const std::size_t n = data.rows();
  const std::size_t dim = data.dim;

  std::vector<std::size_t> assign(n, clusters);
  std::vector<double> dist(n);
  std::vector<std::uint64_t> sizes(clusters, 0);
  std::vector<double> history;

  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    double total = 0.0;
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto [c, d] = centers.nearest(data.row(i));
      changed |= c != assign[i];
      assign[i] = c;
      dist[i] = d;
      total += d;
      ++sizes[c];
    }
    history.push_back(total);
    if (!changed) break;

    std::vector<double> sums(clusters * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.row(i);
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i] * dim + j] += x[j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < clusters; ++c) {
      auto ctr = centers.row(c);
      if (sizes[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) {
          ctr[j] = sums[c * dim + j] / static_cast<double>(sizes[c]);
        }
        continue;
      }
      // Empty cluster: move it onto the worst-served point. Inertia can only
      // go down.
      std::size_t worst = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (worst == n || dist[i] > dist[worst]) worst = i;
      }
      taken[worst] = true;
      const auto x = data.row(worst);
      for (std::size_t j = 0; j < dim; ++j) ctr[j] = x[j];
      dist[worst] = 0.0;
    }
  }

  KMeansModel model = to_model(centers, seed);
  model.counts.assign(clusters, 0);
  for (std::size_t i = 0; i < n; ++i) ++model.counts[model.nearest(data.row(i))];
  model.inertia_history = std::move(history);
  return model;
}

double inertia(const KMeansModel& model, const FrameMatrix& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    total += squared_distance(data.row(i), model.centroid(model.nearest(data.row(i))));
  }
  return total;
}

UnitSequence predict(const KMeansModel& model, const FeatureSequence& seq) {
  if (seq.dim != model.dim) {
    throw ArgumentError("predict: " + seq.utterance_id + " has dim " +
                        std::to_string(seq.dim) + ", model expects " +
                        std::to_string(model.dim));
  }
  UnitSequence out;
  out.utterance_id = seq.utterance_id;
  out.symbols.reserve(seq.frames());
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    out.symbols.push_back(model.nearest(seq.frame(t)));
  }
  return out;
}

void write_kmeans(std::ostream& os, const KMeansModel& model) {
  binio::write_magic(os, std::string_view(kKMeansMagic, 4));
  binio::write_le<std::uint8_t>(os, kKMeansVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.clusters()));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.dim));
  binio::write_le<std::uint64_t>(os, model.seed);
  os.write(reinterpret_cast<const char*>(model.centroids.data()),
           static_cast<std::streamsize>(model.centroids.size() * sizeof(float)));
  if (!os) throw Error("write_kmeans: stream write failed");
}

void write_kmeans(const std::filesystem::path& path, const KMeansModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_kmeans(os, model);
}

KMeansModel read_kmeans(std::istream& is) {
  binio::expect_magic(is, std::string_view(kKMeansMagic, 4), "k-means model");
  const auto version = binio::read_le<std::uint8_t>(is, "version");
  if (version != kKMeansVersion) {
    throw FormatError("k-means model: unsupported version " +
                      std::to_string(version));
  }
  const auto clusters = binio::read_le<std::uint32_t>(is, "cluster count");
  const auto dim = binio::read_le<std::uint32_t>(is, "dim");
  KMeansModel model;
  model.seed = binio::read_le<std::uint64_t>(is, "seed");
  if (clusters == 0 || dim == 0) {
    throw FormatError("k-means model: zero clusters or dim");
  }
  model.dim = dim;
  model.centroids.resize(std::size_t{clusters} * dim);
  const auto bytes =
      static_cast<std::streamsize>(model.centroids.size() * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(model.centroids.data()), bytes)) {
    throw CorruptionError("k-means model: truncated centroid payload");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError("k-means model: trailing bytes after centroids");
  }
  for (float v : model.centroids) {
    if (!std::isfinite(v)) throw CorruptionError("k-means model: non-finite centroid");
  }
  model.counts.assign(clusters, 0);
  return model;
}

KMeansModel read_kmeans(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open k-means model " + path.string());
  return read_kmeans(is);
}

}  // namespace pseudolang
