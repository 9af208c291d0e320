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

// Helpers shared by the unit tests and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pseudolang/bpe.hpp"
#include "pseudolang/clustering.hpp"
#include "pseudolang/features.hpp"
#include "pseudolang/pseudo_lang.hpp"
#include "pseudolang/synth.hpp"
#include "pseudolang/training.hpp"

namespace pltest {

using namespace pseudolang;

// Library-level run of pool -> k-means -> dedup -> BPE over a corpus.
struct InducedRun {
  std::vector<UnitSequence> units;
  std::vector<PseudoCharSequence> chars;
  std::vector<PseudoTokenSequence> tokens;
  KMeansModel kmeans;
  BpeModel bpe;
  std::size_t raw_len = 0;
  std::size_t dedup_len = 0;
  std::size_t token_len = 0;
};

inline InducedRun induce(const std::vector<FeatureSequence>& features, std::size_t clusters,
                         std::size_t merges, std::uint64_t seed, std::size_t kernel = 2) {
  std::vector<FeatureSequence> pooled;
  for (const auto& f : features) pooled.push_back(average_pool(f, kernel));
  const FrameMatrix data = FrameMatrix::stack(pooled);
  MiniBatchOptions o;
  o.clusters = clusters;
  o.batch_size = std::min<std::size_t>(1024, data.rows());
  o.iterations = 20 * ((data.rows() + o.batch_size - 1) / o.batch_size);
  o.seed = seed;
  InducedRun r;
  r.kmeans = minibatch_fit(data, o);
  for (const auto& p : pooled) r.units.push_back(predict(r.kmeans, p));
  for (const auto& u : r.units) r.chars.push_back(deduplicate(u));
  r.bpe = bpe_train(r.chars, clusters, clusters + merges + BpeModel::kSpecials);
  for (const auto& c : r.chars) r.tokens.push_back(r.bpe.encode(c));
  for (const auto& u : r.units) r.raw_len += u.size();
  for (const auto& c : r.chars) r.dedup_len += c.size();
  for (const auto& t : r.tokens) r.token_len += t.size();
  return r;
}

inline std::vector<TrainExample> pair_examples(const std::vector<FeatureSequence>& features,
                                               const std::vector<PseudoTokenSequence>& tokens) {
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < features.size(); ++i) out.push_back({features[i], tokens[i]});
  return out;
}

// Elementwise relative error with an absolute floor on the denominator, so
// coordinates whose true gradient is ~0 are judged on absolute error.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline FeatureSequence random_features(std::mt19937_64& rng, std::size_t frames,
                                       std::size_t dim, const std::string& id = "u") {
  std::normal_distribution<float> n(0.0f, 1.0f);
  FeatureSequence f;
  f.utterance_id = id;
  f.dim = dim;
  f.data.resize(frames * dim);
  for (auto& x : f.data) x = n(rng);
  return f;
}

}  // namespace pltest
