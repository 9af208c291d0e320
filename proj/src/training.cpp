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

#include "pseudolang/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "pseudolang/error.hpp"

namespace pseudolang {

nn::Mat TrainBatch::frames(std::size_t i) const {
  nn::Mat m(frame_lengths.at(i), feature_dim);
  const double* src = features.data() + i * max_frames * feature_dim;
  std::copy(src, src + m.v.size(), m.v.begin());
  return m;
}

std::span<const Symbol> TrainBatch::target(std::size_t i) const {
  return {targets.data() + i * max_targets, target_lengths.at(i)};
}

nn::Mat to_mat(const FeatureSequence& seq) {
  nn::Mat m(seq.frames(), seq.dim);
  std::copy(seq.data.begin(), seq.data.end(), m.v.begin());
  return m;
}

TrainBatch make_batch(std::span<const TrainExample> examples,
                      std::span<const std::size_t> indices, Symbol sos,
                      Symbol eos, Symbol pad) {
  TrainBatch b;
  if (indices.empty()) throw ArgumentError("make_batch: empty batch");
  b.feature_dim = examples[indices[0]].features.dim;
  for (std::size_t i : indices) {
    const auto& ex = examples[i];
    if (ex.features.dim != b.feature_dim) {
      throw ArgumentError("make_batch: mixed feature dims at " + ex.features.utterance_id);
    }
    b.max_frames = std::max(b.max_frames, ex.features.frames());
    b.max_targets = std::max(b.max_targets, ex.targets.size() + 2);
  }
  b.features.assign(indices.size() * b.max_frames * b.feature_dim, 0.0);
  b.targets.assign(indices.size() * b.max_targets, pad);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& ex = examples[indices[k]];
    b.utterance_ids.push_back(ex.features.utterance_id);
    b.frame_lengths.push_back(ex.features.frames());
    std::copy(ex.features.data.begin(), ex.features.data.end(),
              b.features.begin() + static_cast<long>(k * b.max_frames * b.feature_dim));
    Symbol* t = b.targets.data() + k * b.max_targets;
    *t++ = sos;
    for (Symbol s : ex.targets.symbols) *t++ = s;
    *t = eos;
    b.target_lengths.push_back(ex.targets.size() + 2);
  }
  return b;
}

TrainBatch make_batch(std::span<const TrainExample> examples, Symbol sos,
                      Symbol eos, Symbol pad) {
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(examples, idx, sos, eos, pad);
}

TrainResult run_training(std::vector<double>& params, std::size_t num_examples,
                         const TrainOptions& opts, const BatchGradFn& grad_fn,
                         const StepCallback& on_step) {
  if (num_examples == 0) throw ArgumentError("train: empty corpus");
  if (opts.batch_size == 0) throw ArgumentError("train: batch_size must be > 0");
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(num_examples);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t pos = 0;

  nn::Adam adam(params.size());
  std::vector<double> velocity(params.size(), 0.0);
  TrainResult result;
  result.loss_curve.reserve(opts.steps);
  std::vector<std::size_t> batch;

  for (std::size_t step = 0; step < opts.steps; ++step) {
    const std::size_t end = std::min(pos + opts.batch_size, num_examples);
    batch.assign(order.begin() + static_cast<long>(pos),
                 order.begin() + static_cast<long>(end));
    pos = end;
    if (pos == num_examples) {
      std::shuffle(order.begin(), order.end(), rng);
      pos = 0;
    }

    GradResult g;
    try {
      g = grad_fn(batch);
    } catch (const NumericError& e) {
      throw TrainingDivergedError(
          fmt::format("training diverged at step {}: {}", step, e.what()),
          static_cast<long>(step));
    }
    const double loss = g.loss.mean();
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError(
          fmt::format("training diverged at step {}: loss is {}", step, loss),
          static_cast<long>(step));
    }
    result.loss_curve.push_back(loss);
    if (on_step) on_step(step, loss);

    const double inv = g.loss.tokens ? 1.0 / static_cast<double>(g.loss.tokens) : 0.0;
    for (double& x : g.grads) x *= inv;
    nn::clip_grad_norm(g.grads, opts.clip_norm);
    const double lr = nn::scheduled_lr(opts.lr, step, opts.steps, opts.warmup_frac);
    if (opts.optimizer == OptimizerKind::kAdam) {
      adam.step(params, g.grads, lr);
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = opts.momentum * velocity[i] + g.grads[i];
        params[i] -= lr * velocity[i];
      }
    }
  }
  return result;
}

std::string format_loss_curve(const TrainResult& result) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    out += fmt::format("{},{:.9g}\n", i, result.loss_curve[i]);
  }
  return out;
}

}  // namespace pseudolang
