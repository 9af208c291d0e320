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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pseudolang/clustering.hpp"
#include "pseudolang/error.hpp"
#include "support.hpp"

using namespace pseudolang;

namespace {

double sqdist(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return s;
}

std::size_t row_index(const FrameMatrix& data, std::span<const float> v) {
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (std::equal(v.begin(), v.end(), data.row(i).begin())) return i;
  return data.rows();
}

std::vector<std::size_t> assign(const KMeansModel& m, const FrameMatrix& data) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.rows(); ++i) out.push_back(m.nearest(data.row(i)));
  return out;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::size_t, std::size_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

FrameMatrix blobs(std::mt19937_64& rng, const std::vector<std::vector<float>>& centers,
                  std::size_t per, float sigma) {
  std::normal_distribution<float> n(0.0f, sigma);
  std::vector<std::vector<float>> rows;
  for (const auto& c : centers)
    for (std::size_t i = 0; i < per; ++i) {
      std::vector<float> r = c;
      for (auto& x : r) x += n(rng);
      rows.push_back(r);
    }
  return FrameMatrix::from_rows(rows);
}

}  // namespace

TEST_CASE("kmeans++ with C equal to the sample size picks every point") {
  const auto data = FrameMatrix::from_rows({{0, 0}, {1, 0}, {0, 3}, {5, 5}, {2, 2}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto centers = kmeanspp_init(data, 5, seed);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < 5; ++i) seen.insert(row_index(data, centers.row(i)));
    CHECK(seen.size() == 5);
    CHECK(!seen.count(5));
  }
}

TEST_CASE("kmeans++ C=1 is a uniform draw") {
  const auto data = FrameMatrix::from_rows({{0}, {1}, {2}, {3}});
  std::vector<int> hits(4, 0);
  for (std::uint64_t seed = 0; seed < 4000; ++seed)
    ++hits[row_index(data, kmeanspp_init(data, 1, seed).row(0))];
  for (int h : hits) CHECK(std::abs(h - 1000) < 3 * std::sqrt(4000 * 0.25 * 0.75));
}

TEST_CASE("kmeans++ puts one center in each of two far blobs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<std::vector<float>> rows;
  for (float c : {0.0f, 100.0f})
    for (int i = 0; i < 50; ++i) rows.push_back({c + u(rng), c + u(rng)});
  const auto data = FrameMatrix::from_rows(rows);
  int split = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto c = kmeanspp_init(data, 2, seed);
    split += (c.row(0)[0] < 50) != (c.row(1)[0] < 50);
  }
  CHECK(split >= 990);
}

TEST_CASE("kmeans++ matches the exact D^2 distribution on six points") {
  const auto data = FrameMatrix::from_rows({{0, 0}, {1, 0}, {0, 2}, {3, 3}, {-2, 1}, {4, -1}});
  const std::size_t n = 6;
  // Exact probability of each ordered (first, second) pair.
  std::vector<double> exact(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) total += sqdist(data.row(i), data.row(j));
    for (std::size_t j = 0; j < n; ++j)
      exact[i * n + j] = (1.0 / n) * sqdist(data.row(i), data.row(j)) / total;
  }
  const int trials = 100000;
  std::vector<int> count(n * n, 0);
  for (int t = 0; t < trials; ++t) {
    const auto c = kmeanspp_init(data, 2, static_cast<std::uint64_t>(t));
    ++count[row_index(data, c.row(0)) * n + row_index(data, c.row(1))];
  }
  // 3 sigma on each marginal: the uniform first pick and the D^2 second pick.
  for (std::size_t k = 0; k < n; ++k) {
    double p_first = 0, p_second = 0;
    int c_first = 0, c_second = 0;
    for (std::size_t j = 0; j < n; ++j) {
      p_first += exact[k * n + j];
      c_first += count[k * n + j];
      p_second += exact[j * n + k];
      c_second += count[j * n + k];
    }
    CHECK(std::abs(c_first - trials * p_first) <= 3 * std::sqrt(trials * p_first * (1 - p_first)));
    CHECK(std::abs(c_second - trials * p_second) <=
          3 * std::sqrt(trials * p_second * (1 - p_second)));
  }
  // The joint table as a whole: chi-square over the 30 reachable cells against
  // the 0.1% critical value for 29 degrees of freedom.
  double chi2 = 0;
  for (std::size_t k = 0; k < n * n; ++k) {
    if (exact[k] == 0) {
      CHECK(count[k] == 0);
      continue;
    }
    const double e = trials * exact[k];
    chi2 += (count[k] - e) * (count[k] - e) / e;
  }
  CHECK(chi2 < 58.3);
}

TEST_CASE("kmeans++ rejects too few distinct points") {
  const auto data = FrameMatrix::from_rows({{1}, {1}, {2}});
  CHECK_THROWS_AS(kmeanspp_init(data, 3, 0), DegenerateInputError);
  CHECK_NOTHROW(kmeanspp_init(data, 2, 0));
}

TEST_CASE("mini-batch fit started at the data points leaves them fixed") {
  const auto data = FrameMatrix::from_rows({{0, 0}, {4, 1}, {-3, 7}});
  MiniBatchOptions o;
  o.clusters = 3;
  o.batch_size = 2;
  o.iterations = 50;
  const auto m = minibatch_fit(data, o, data);
  CHECK(m.centroids == data.data);
  for (auto c : m.counts) CHECK(c > 0);
}

TEST_CASE("mini-batch fit recovers three tight blobs") {
  std::mt19937_64 rng(11);
  const std::vector<std::vector<float>> centers = {{0, 0}, {10, 0}, {0, 10}};
  const auto data = blobs(rng, centers, 100, 0.1f);
  MiniBatchOptions o;
  o.clusters = 3;
  o.batch_size = 32;
  o.iterations = 200;
  std::vector<std::vector<std::size_t>> partitions;
  for (std::uint64_t seed : {1, 2}) {
    o.seed = seed;
    const auto m = minibatch_fit(data, o);
    REQUIRE(m.inertia_history.size() == 200);
    std::set<std::size_t> matched;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t < 3; ++t)
        if (sqdist(m.centroid(c), centers[t]) < 0.25) matched.insert(t);
      CHECK(m.counts[c] > 0);
    }
    CHECK(matched.size() == 3);
    partitions.push_back(assign(m, data));
  }
  CHECK(same_partition(partitions[0], partitions[1]));

  // Lloyd on the same data is the reference partition.
  CHECK(same_partition(partitions[0], assign(lloyd_fit(data, 3, 0, 100), data)));
}

TEST_CASE("mini-batch fit is deterministic and rejects empty input") {
  std::mt19937_64 rng(12);
  const auto data = blobs(rng, {{0, 0, 0}, {3, 3, 3}, {-3, 0, 3}, {5, -5, 0}}, 40, 1.0f);
  MiniBatchOptions o;
  o.clusters = 6;
  o.batch_size = 25;
  o.iterations = 40;
  o.seed = 99;
  const auto a = minibatch_fit(data, o), b = minibatch_fit(data, o);
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia_history == b.inertia_history);
  for (auto c : a.counts) CHECK(c > 0);
  CHECK_THROWS_AS(minibatch_fit(FrameMatrix{}, o), ArgumentError);
}

TEST_CASE("Lloyd examples") {
  const auto square = FrameMatrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const auto m = lloyd_fit(square, 4, 3, 10);
  CHECK(inertia(m, square) == 0.0);

  // {0,1,9,10}: optimum by enumerating all 2-partitions.
  const std::vector<double> pts = {0, 1, 9, 10};
  double best = 1e300;
  for (int mask = 1; mask < 15; ++mask) {
    double sa = 0, sb = 0, na = 0, nb = 0;
    for (int i = 0; i < 4; ++i) ((mask >> i) & 1 ? (sa += pts[i], na++) : (sb += pts[i], nb++));
    double cost = 0;
    for (int i = 0; i < 4; ++i) {
      const double c = (mask >> i) & 1 ? sa / na : sb / nb;
      cost += (pts[i] - c) * (pts[i] - c);
    }
    best = std::min(best, cost);
  }
  const auto line = FrameMatrix::from_rows({{0}, {1}, {9}, {10}});
  const auto fit = lloyd_fit(line, 2, 0, 100);
  CHECK(std::abs(inertia(fit, line) - best) < 1e-9);
  CHECK(std::abs(best - 1.0) < 1e-12);
  std::vector<float> cs = {fit.centroid(0)[0], fit.centroid(1)[0]};
  std::sort(cs.begin(), cs.end());
  CHECK(cs[0] == 0.5f);
  CHECK(cs[1] == 9.5f);
}

TEST_CASE("Lloyd inertia never increases") {
  std::mt19937_64 rng(13);
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<float>> rows(60, std::vector<float>(3));
    std::normal_distribution<float> n;
    for (auto& r : rows)
      for (auto& x : r) x = n(rng);
    const auto data = FrameMatrix::from_rows(rows);
    const auto m = lloyd_fit(data, 5, trial, 100);
    REQUIRE(!m.inertia_history.empty());
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
      CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] + 1e-9);
  }
}

TEST_CASE("predict picks the nearest centroid with lowest-index ties") {
  KMeansModel m;
  m.dim = 1;
  m.centroids = {0, 10, 4, 20, 30, 6, 50, 7};
  m.counts.assign(8, 1);
  CHECK(predict(m, FeatureSequence::from_rows("a", {{7}})).symbols == std::vector<Symbol>{7});
  // 5 is equidistant from centroids 2 (4) and 5 (6).
  CHECK(predict(m, FeatureSequence::from_rows("a", {{5}})).symbols == std::vector<Symbol>{2});
  CHECK_THROWS_AS(predict(m, FeatureSequence::from_rows("a", {{1, 2}})), ArgumentError);

  std::mt19937_64 rng(14);
  KMeansModel r;
  r.dim = 4;
  r.centroids = pltest::random_features(rng, 12, 4).data;
  r.counts.assign(12, 1);
  const auto frames = pltest::random_features(rng, 100, 4);
  const auto units = predict(r, frames);
  for (std::size_t i = 0; i < 100; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 12; ++c)
      if (sqdist(frames.frame(i), r.centroid(c)) < sqdist(frames.frame(i), r.centroid(best))) best = c;
    CHECK(units.symbols[i] == best);
  }
}

TEST_CASE("k-means model roundtrip") {
  std::mt19937_64 rng(15);
  KMeansModel m;
  m.dim = 3;
  m.seed = 123456789012345ull;
  m.centroids = pltest::random_features(rng, 5, 3).data;
  m.counts.assign(5, 3);
  std::stringstream ss;
  write_kmeans(ss, m);
  const auto back = read_kmeans(ss);
  CHECK(back.dim == 3);
  CHECK(back.seed == m.seed);
  CHECK(back.centroids == m.centroids);
  std::string bytes = ss.str();
  bytes[0] = 'X';
  std::istringstream bad(bytes);
  CHECK_THROWS_AS(read_kmeans(bad), FormatError);
}
