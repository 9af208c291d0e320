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

// Minimal dense building blocks with hand-written reverse-mode gradients:
// row-major matrices, a flat parameter store, linear / layer-norm /
// single-head attention / GELU feed-forward layers, pre-norm residual blocks
// and the encoder / decoder stacks built from them.
//
// All arithmetic is double precision. Every parameter lives in one flat
// vector; layers hold ParamRef offsets into it, and gradients are written to a
// buffer with the identical layout.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pseudolang/sequence.hpp"

namespace pseudolang::nn {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {v.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {v.data() + i * cols, cols};
  }
};

struct ParamRef {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const ParamRef&) const = default;
};

class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamRef ref;
  };

  ParamRef add(std::string name, std::size_t rows, std::size_t cols);

  std::span<double> view(ParamRef r) { return {values_.data() + r.offset, r.size()}; }
  std::span<const double> view(ParamRef r) const {
    return {values_.data() + r.offset, r.size()};
  }
  std::optional<ParamRef> find(const std::string& name) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
  std::vector<Entry> entries_;
};

struct LinearRefs {
  ParamRef w;  // in x out
  ParamRef b;  // 1 x out
};
struct LayerNormRefs {
  ParamRef gain;
  ParamRef bias;
};
struct AttentionRefs {
  LinearRefs q, k, v, o;
};
struct FeedForwardRefs {
  LinearRefs in, out;
};

/// Pre-norm residual block: optional causal self-attention, optional
/// cross-attention over a memory, then a feed-forward layer.
struct BlockRefs {
  bool causal = false;
  bool has_cross = false;
  LayerNormRefs self_norm;
  AttentionRefs self_attn;
  LayerNormRefs cross_norm;
  AttentionRefs cross_attn;
  LayerNormRefs ff_norm;
  FeedForwardRefs ff;
};

/// A stack of blocks fed either by a linear projection of real-valued
/// frames (encoder) or by a token embedding table (decoder / label network),
/// plus fixed sinusoidal positions and a final layer norm.
struct StackLayout {
  std::string name;
  std::size_t d_model = 0;
  bool embeds_tokens = false;
  LinearRefs input;     // frames -> d_model
  ParamRef embedding;   // vocab x d_model
  std::vector<BlockRefs> blocks;
  LayerNormRefs final_norm;
};

struct StackShape {
  std::size_t input_dim = 0;  // frame dim, or vocab size for token stacks
  std::size_t d_model = 0;
  std::size_t ff_dim = 0;
  std::size_t layers = 0;
  bool embeds_tokens = false;
  bool causal = false;
  bool cross = false;
};

StackLayout register_stack(ParamStore& store, const std::string& name,
                           const StackShape& shape);

/// Gaussian weights scaled by 1/sqrt(fan_in), unit gains, zero biases,
/// embeddings with std 1/sqrt(d_model). Ranges are visited in registration
/// order.
void init_params(ParamStore& store, std::mt19937_64& rng);
void init_range(ParamStore& store, const std::string& prefix, std::mt19937_64& rng);

// ---- Traces recorded by the forward pass for backward ----------------------

struct LayerNormTrace {
  Mat xhat;
  std::vector<double> rstd;
};
struct AttentionTrace {
  Mat xq, xkv;  // inputs (already normalised)
  Mat q, k, v;
  Mat probs;
  Mat ctx;
  bool causal = false;
};
struct FeedForwardTrace {
  Mat x, pre, act;
};
struct BlockTrace {
  LayerNormTrace self_norm;
  AttentionTrace self_attn;
  LayerNormTrace cross_norm;
  AttentionTrace cross_attn;
  LayerNormTrace ff_norm;
  FeedForwardTrace ff;
};
struct StackTrace {
  Mat frames;                   // projection input
  std::vector<Symbol> tokens;   // embedding input
  std::vector<BlockTrace> blocks;
  LayerNormTrace final_norm;
  Mat output;
};

/// Runs the stack over frames (embeds_tokens == false). `memory` is required
/// iff the blocks have cross-attention. Raises NumericError naming the first
/// sublayer that produced a non-finite value.
const Mat& forward_frames(const ParamStore& store, const StackLayout& layout,
                          const Mat& frames, const Mat* memory, StackTrace& trace);
const Mat& forward_tokens(const ParamStore& store, const StackLayout& layout,
                          std::span<const Symbol> tokens, const Mat* memory,
                          StackTrace& trace);

/// Accumulates parameter gradients into `grads` (same layout as the store).
/// Gradient w.r.t. the cross-attention memory is added to `d_memory` when
/// given.
void backward_stack(const ParamStore& store, const StackLayout& layout,
                    const StackTrace& trace, const Mat& d_output,
                    std::span<double> grads, Mat* d_memory);

// ---- Primitive ops, exposed for the models and for tests --------------------

Mat matmul(const Mat& a, std::span<const double> b, std::size_t b_cols);
Mat linear(const ParamStore& store, const LinearRefs& l, const Mat& x);
/// dW += x^T dy, db += colsum(dy); returns dy W^T.
Mat linear_backward(const ParamStore& store, const LinearRefs& l, const Mat& x,
                    const Mat& dy, std::span<double> grads, bool need_dx = true);

double gelu(double x);
double gelu_grad(double x);

/// Fixed additive sinusoidal position codes.
void add_positions(Mat& x);

/// Numerically stable log-softmax of each row.
Mat log_softmax_rows(const Mat& logits);

void check_finite(const Mat& m, const std::string& where);

// ---- Optimisation -----------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

class Adam {
 public:
  Adam(std::size_t n, AdamOptions opts = {});
  void step(std::span<double> params, std::span<const double> grads, double lr);

 private:
  AdamOptions opts_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Linear warmup over the first `warmup_frac` of `total` steps to `peak`,
/// then linear decay to 10% of `peak` at the final step.
double scheduled_lr(double peak, std::size_t step, std::size_t total,
                    double warmup_frac);

/// Scales `grads` so its L2 norm is at most `max_norm`; returns the original
/// norm.
double clip_grad_norm(std::span<double> grads, double max_norm);

}  // namespace pseudolang::nn
