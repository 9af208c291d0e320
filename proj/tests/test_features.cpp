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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pseudolang/error.hpp"
#include "pseudolang/features.hpp"
#include "support.hpp"

using namespace pseudolang;
namespace fs = std::filesystem;

namespace {

std::string to_bytes(const FeatureSequence& s) {
  std::ostringstream os;
  write_features(os, s);
  return os.str();
}

FeatureSequence from_bytes(const std::string& b) {
  std::istringstream is(b);
  return read_features(is, "x");
}

// Builds a feature file by hand so the reader is checked against the layout
// rather than against the writer.
std::string handmade(std::uint32_t dim, std::uint32_t frames, const std::vector<float>& payload,
                     const char* magic = "PLFT", std::uint8_t version = 1) {
  std::string b(magic, 4);
  b.push_back(static_cast<char>(version));
  auto put32 = [&b](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put32(dim);
  put32(frames);
  for (float f : payload) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put32(u);
  }
  return b;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pseudolang_test_features_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("reads a hand-built 3x2 file") {
  const auto seq = from_bytes(handmade(2, 3, {1, 2, 3, 4, 5, 6}));
  CHECK(seq.frames() == 3);
  CHECK(seq.dim == 2);
  CHECK(seq.frame(2)[0] == 5.0f);
  CHECK(seq.frame(2)[1] == 6.0f);
  CHECK(to_bytes(seq) == handmade(2, 3, {1, 2, 3, 4, 5, 6}));
}

TEST_CASE("payload not divisible by dim is corruption") {
  CHECK_THROWS_AS(from_bytes(handmade(4, 2, {1, 2, 3, 4, 5, 6, 7})), CorruptionError);
}

TEST_CASE("frame count disagreeing with payload is corruption") {
  CHECK_THROWS_AS(from_bytes(handmade(2, 3, {1, 2, 3, 4})), CorruptionError);
}

TEST_CASE("malformed headers are format errors") {
  CHECK_THROWS_AS(from_bytes(handmade(2, 1, {1, 2}, "PLFX")), FormatError);
  CHECK_THROWS_AS(from_bytes(handmade(2, 1, {1, 2}, "PLFT", 9)), FormatError);
  CHECK_THROWS_AS(from_bytes(handmade(0, 1, {})), FormatError);
  CHECK_THROWS_AS(from_bytes(handmade(2, 0, {})), FormatError);
  CHECK_THROWS_AS(from_bytes(std::string("PLF")), FormatError);
}

TEST_CASE("non-finite payload is rejected") {
  CHECK_THROWS_AS(from_bytes(handmade(1, 2, {1.0f, std::nanf("")})), CorruptionError);
  CHECK_THROWS_AS(from_bytes(handmade(1, 1, {INFINITY})), CorruptionError);
}

TEST_CASE("write(read(f)) is byte-identical for random valid files") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t dim = 1 + rng() % 9, frames = 1 + rng() % 20;
    std::vector<float> payload(dim * frames);
    std::uniform_real_distribution<float> u(-1e6f, 1e6f);
    for (auto& x : payload) x = u(rng);
    const std::string bytes = handmade(dim, frames, payload);
    REQUIRE(to_bytes(from_bytes(bytes)) == bytes);
  }
}

TEST_CASE("average_pool examples") {
  const auto seq = FeatureSequence::from_rows("a", {{0}, {2}, {4}, {6}});
  const auto pooled = average_pool(seq, 2);
  REQUIRE(pooled.frames() == 2);
  CHECK(pooled.frame(0)[0] == 1.0f);
  CHECK(pooled.frame(1)[0] == 5.0f);

  const auto odd = average_pool(FeatureSequence::from_rows("b", {{0}, {2}, {4}}), 2);
  REQUIRE(odd.frames() == 2);
  CHECK(odd.frame(0)[0] == 1.0f);
  CHECK(odd.frame(1)[0] == 4.0f);

  CHECK(average_pool(seq, 1).data == seq.data);
  CHECK_THROWS_AS(average_pool(seq, 0), ArgumentError);
  CHECK(average_pool(seq, 10).frames() == 1);
  CHECK(average_pool(seq, 10).frame(0)[0] == 3.0f);
}

TEST_CASE("average_pool length and mean properties") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng() % 40, dim = 1 + rng() % 5, k = 1 + rng() % 7;
    const auto seq = pltest::random_features(rng, m, dim);
    const auto pooled = average_pool(seq, k);
    REQUIRE(pooled.frames() == (m + k - 1) / k);
    REQUIRE(pooled.dim == dim);
    // Each window against a direct mean.
    for (std::size_t w = 0; w < pooled.frames(); ++w) {
      for (std::size_t j = 0; j < dim; ++j) {
        double acc = 0;
        const std::size_t end = std::min(m, (w + 1) * k);
        for (std::size_t i = w * k; i < end; ++i) acc += seq.frame(i)[j];
        REQUIRE(pooled.frame(w)[j] == doctest::Approx(acc / double(end - w * k)).epsilon(1e-6));
      }
    }
    if (m % k == 0) {
      for (std::size_t j = 0; j < dim; ++j) {
        double a = 0, b = 0;
        for (std::size_t i = 0; i < m; ++i) a += seq.frame(i)[j];
        for (std::size_t i = 0; i < pooled.frames(); ++i) b += pooled.frame(i)[j];
        REQUIRE(b / double(pooled.frames()) == doctest::Approx(a / double(m)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("standardize gives zero mean and unit variance per dimension") {
  std::mt19937_64 rng(3);
  auto seq = pltest::random_features(rng, 50, 3);
  for (std::size_t i = 0; i < seq.frames(); ++i) seq.frame(i)[1] = 7.0f + 3.0f * seq.frame(i)[1];
  const auto s = standardize(seq);
  for (std::size_t j = 0; j < 3; ++j) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < s.frames(); ++i) mu += s.frame(i)[j];
    mu /= 50;
    for (std::size_t i = 0; i < s.frames(); ++i) var += (s.frame(i)[j] - mu) * (s.frame(i)[j] - mu);
    CHECK(std::abs(mu) < 1e-5);
    CHECK(var / 50 == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("corpus roundtrip and manifest checks") {
  const fs::path root = scratch("corpus");
  std::mt19937_64 rng(4);
  std::vector<FeatureSequence> seqs;
  for (int i = 0; i < 5; ++i)
    seqs.push_back(pltest::random_features(rng, 3 + i, 2, "u" + std::to_string(i)));
  write_corpus(root, seqs);
  const FeatureCorpus c = read_corpus(root);
  REQUIRE(c.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto s = c.load(i);
    CHECK(s.utterance_id == seqs[i].utterance_id);
    CHECK(s.data == seqs[i].data);
  }

  // Manifest frame count disagreeing with the file.
  {
    std::ofstream os(root / "manifest.tsv", std::ios::trunc);
    os << "id\tpath\tframes\nu0\tfeats/u0.plft\t99\n";
  }
  CHECK_THROWS_AS(read_corpus(root).load(0), CorruptionError);
  {
    std::ofstream os(root / "manifest.tsv", std::ios::trunc);
    os << "id\tpath\tframes\nu0\tfeats/u0.plft\t3\nu0\tfeats/u1.plft\t4\n";
  }
  CHECK_THROWS_AS(read_corpus(root), FormatError);
  {
    std::ofstream os(root / "manifest.tsv", std::ios::trunc);
    os << "utt\tfile\n";
  }
  CHECK_THROWS_AS(read_corpus(root), FormatError);
  fs::remove_all(root);
}
