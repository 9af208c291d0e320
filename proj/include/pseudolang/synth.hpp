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

// Seeded synthetic feature corpora: a hidden Markov process over K latent
// states with Gaussian emissions and per-state dwell times. The latent state
// sequence (without repeats) is kept as a ground-truth transcript.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pseudolang/features.hpp"
#include "pseudolang/sequence.hpp"

namespace pseudolang {

struct LatentTag {};
/// Ground-truth latent state ids of one utterance, one per dwell segment.
using LatentSequence = SymbolSequence<LatentTag>;

struct SynthOptions {
  std::size_t utterances = 500;
  std::size_t states = 25;
  std::size_t dim = 16;
  std::size_t min_segments = 4;
  std::size_t max_segments = 10;
  std::size_t min_dwell = 3;
  double dwell_mean = 8.0;     // frames per segment, including min_dwell
  double noise = 0.3;          // emission std-dev
  double spread = 3.0;         // std-dev of state means
  std::size_t branching = 3;   // successors per state
  std::uint64_t seed = 0;      // HMM structure: means and transitions
  std::optional<std::uint64_t> sample_seed;  // utterances; defaults to seed
  std::string id_prefix = "utt";
};

struct SynthCorpus {
  std::vector<FeatureSequence> features;
  std::vector<LatentSequence> latent;
  std::vector<std::vector<float>> state_means;  // K x dim
};

/// Throws ArgumentError for inconsistent options (e.g. branching >= states).
SynthCorpus generate_synthetic(const SynthOptions& opts);

}  // namespace pseudolang
