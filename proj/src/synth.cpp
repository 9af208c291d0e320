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

#include "pseudolang/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "pseudolang/error.hpp"

namespace pseudolang {

SynthCorpus generate_synthetic(const SynthOptions& o) {
  if (o.states < 2 || o.dim == 0 || o.utterances == 0) {
    throw ArgumentError("synth: need >= 2 states, dim > 0 and >= 1 utterance");
  }
  if (o.branching == 0 || o.branching >= o.states) {
    throw ArgumentError("synth: branching must be in [1, states)");
  }
  if (o.min_segments == 0 || o.max_segments < o.min_segments) {
    throw ArgumentError("synth: bad segment count range");
  }
  if (o.min_dwell == 0 || o.dwell_mean < static_cast<double>(o.min_dwell)) {
    throw ArgumentError("synth: dwell_mean must be >= min_dwell >= 1");
  }
  if (!(o.noise >= 0.0) || !(o.spread > 0.0)) {
    throw ArgumentError("synth: noise must be >= 0 and spread > 0");
  }

  SynthCorpus out;
  std::mt19937_64 structure(o.seed);
  std::normal_distribution<double> mean_dist(0.0, o.spread);
  out.state_means.assign(o.states, std::vector<float>(o.dim));
  for (auto& mu : out.state_means) {
    for (auto& x : mu) x = static_cast<float>(mean_dist(structure));
  }

  // Sparse transitions: each state moves to `branching` other states.
  std::vector<std::vector<std::size_t>> successors(o.states);
  std::vector<std::discrete_distribution<std::size_t>> next(o.states);
  std::uniform_real_distribution<double> weight(0.2, 1.0);
  for (std::size_t s = 0; s < o.states; ++s) {
    std::vector<std::size_t> others;
    for (std::size_t t = 0; t < o.states; ++t) {
      if (t != s) others.push_back(t);
    }
    std::shuffle(others.begin(), others.end(), structure);
    others.resize(o.branching);
    std::vector<double> w(o.branching);
    for (auto& x : w) x = weight(structure);
    successors[s] = others;
    next[s] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }

  std::mt19937_64 rng(o.sample_seed.value_or(o.seed));
  std::uniform_int_distribution<std::size_t> first_state(0, o.states - 1);
  std::uniform_int_distribution<std::size_t> segments(o.min_segments, o.max_segments);
  const double extra_mean = o.dwell_mean - static_cast<double>(o.min_dwell);
  std::geometric_distribution<std::size_t> extra_dwell(1.0 / (1.0 + extra_mean));
  std::normal_distribution<double> noise(0.0, 1.0);

  const int width = static_cast<int>(std::to_string(o.utterances - 1).size());
  for (std::size_t i = 0; i < o.utterances; ++i) {
    FeatureSequence seq;
    seq.utterance_id = fmt::format("{}{:0{}}", o.id_prefix, i, width);
    seq.dim = o.dim;
    LatentSequence latent;
    latent.utterance_id = seq.utterance_id;

    std::size_t state = first_state(rng);
    const std::size_t count = segments(rng);
    for (std::size_t k = 0; k < count; ++k) {
      if (k > 0) state = successors[state][next[state](rng)];
      latent.symbols.push_back(static_cast<Symbol>(state));
      const std::size_t dwell = o.min_dwell + (extra_mean > 0.0 ? extra_dwell(rng) : 0);
      for (std::size_t f = 0; f < dwell; ++f) {
        for (std::size_t j = 0; j < o.dim; ++j) {
          seq.data.push_back(static_cast<float>(out.state_means[state][j] + o.noise * noise(rng)));
        }
      }
    }
    out.features.push_back(std::move(seq));
    out.latent.push_back(std::move(latent));
  }
  return out;
}

}  // namespace pseudolang
