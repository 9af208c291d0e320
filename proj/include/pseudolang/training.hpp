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

// Training data plumbing and the optimisation loop shared by the
// sequence-to-sequence and transducer models.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pseudolang/features.hpp"
#include "pseudolang/nn.hpp"
#include "pseudolang/sequence.hpp"

namespace pseudolang {

/// One (features, pseudo-token target) pair. Targets carry no sentinels.
struct TrainExample {
  FeatureSequence features;
  PseudoTokenSequence targets;
};

/// Zero-padded features and pad-padded `<sos> y1 .. yn <eos>` targets with
/// per-utterance lengths. Padding never reaches attention or the loss: each
/// utterance is processed at its own length.
struct TrainBatch {
  std::size_t feature_dim = 0;
  std::size_t max_frames = 0;
  std::size_t max_targets = 0;
  std::vector<std::size_t> frame_lengths;
  std::vector<std::size_t> target_lengths;
  std::vector<double> features;  // batch x max_frames x feature_dim
  std::vector<Symbol> targets;   // batch x max_targets
  std::vector<std::string> utterance_ids;

  std::size_t size() const { return frame_lengths.size(); }
  nn::Mat frames(std::size_t i) const;
  /// `<sos> y1 .. yn <eos>` without padding.
  std::span<const Symbol> target(std::size_t i) const;
};

TrainBatch make_batch(std::span<const TrainExample> examples,
                      std::span<const std::size_t> indices, Symbol sos,
                      Symbol eos, Symbol pad);
TrainBatch make_batch(std::span<const TrainExample> examples, Symbol sos,
                      Symbol eos, Symbol pad);

nn::Mat to_mat(const FeatureSequence& seq);

struct LossValue {
  double sum = 0.0;
  std::size_t tokens = 0;
  double mean() const { return tokens == 0 ? 0.0 : sum / static_cast<double>(tokens); }
};

struct GradResult {
  LossValue loss;
  std::vector<double> grads;  // d(loss.sum)/d(params)
};

enum class OptimizerKind { kAdam, kMomentum };

struct TrainOptions {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double warmup_frac = 0.1;
  double clip_norm = 1.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // per-token mean loss of each step's batch
};

using BatchGradFn = std::function<GradResult(std::span<const std::size_t>)>;
using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Seeded mini-batch descent on the per-token mean loss. Batches are
/// consecutive slices of a per-epoch shuffle. A non-finite loss or activation
/// aborts with TrainingDivergedError carrying the step index.
TrainResult run_training(std::vector<double>& params, std::size_t num_examples,
                         const TrainOptions& opts, const BatchGradFn& grad_fn,
                         const StepCallback& on_step = {});

/// `step,loss` CSV.
std::string format_loss_curve(const TrainResult& result);

}  // namespace pseudolang
