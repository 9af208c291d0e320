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

// Encoder-decoder trained on pseudo ASR: an encoder over feature frames and
// an autoregressive decoder over pseudo-subword ids with cross-attention.
// The decoder input embedding table doubles as the output projection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pseudolang/nn.hpp"
#include "pseudolang/training.hpp"

namespace pseudolang {

struct Seq2SeqConfig {
  std::size_t input_dim = 0;
  std::size_t d_model = 32;
  std::size_t ff_dim = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 1;
  std::size_t vocab = 0;
  bool tie_embeddings = true;
  Symbol sos = 0;
  Symbol eos = 0;

  bool operator==(const Seq2SeqConfig&) const = default;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel() = default;
  Seq2SeqModel(const Seq2SeqConfig& config, std::uint64_t seed);

  const Seq2SeqConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const nn::StackLayout& encoder() const { return encoder_; }
  const nn::StackLayout& decoder() const { return decoder_; }

  nn::ParamRef embedding_ref() const { return decoder_.embedding; }
  /// Same ref as embedding_ref() when embeddings are tied.
  nn::ParamRef output_projection_ref() const { return output_projection_; }
  std::span<double> embedding() { return params_.view(embedding_ref()); }
  std::span<double> output_projection() { return params_.view(output_projection_); }

  /// Replaces the target vocabulary: the decoder embedding (and untied
  /// output projection) are reinitialised for `vocab` ids and the sentinel
  /// ids updated. Every other parameter keeps its value.
  void swap_embeddings(std::size_t vocab, Symbol sos, Symbol eos, std::uint64_t seed);

  /// SHA-256 over the names and values of every parameter except the
  /// target-vocabulary tables.
  std::string non_embedding_checksum() const;

  /// Builds an empty model with the given config and copies `values`
  /// (registration order) into it.
  static Seq2SeqModel from_values(const Seq2SeqConfig& config,
                                  std::span<const double> values);

 private:
  void build();

  Seq2SeqConfig config_;
  nn::ParamStore params_;
  nn::StackLayout encoder_;
  nn::StackLayout decoder_;
  nn::ParamRef output_projection_;
};

/// Teacher-forced negative log-likelihood, summed over every predicted
/// position (y1 .. yn <eos>) of every utterance in the batch.
LossValue nll_loss(const Seq2SeqModel& model, const TrainBatch& batch);

/// Exact gradient of nll_loss().sum with respect to every parameter.
GradResult nll_grad(const Seq2SeqModel& model, const TrainBatch& batch);

/// Per-position log-probabilities (rows: y1 .. yn <eos>) for one utterance.
nn::Mat target_log_probs(const Seq2SeqModel& model, const nn::Mat& frames,
                         std::span<const Symbol> target_with_sentinels);

TrainResult train(Seq2SeqModel& model, std::span<const TrainExample> corpus,
                  const TrainOptions& opts, Symbol pad,
                  const StepCallback& on_step = {});

/// Holds the encoder output for one utterance and scores next tokens.
class DecodingSession {
 public:
  DecodingSession(const Seq2SeqModel& model, const FeatureSequence& features);
  /// Log-probabilities of the token after `<sos> prefix`.
  std::vector<double> next_log_probs(std::span<const Symbol> prefix) const;

 private:
  const Seq2SeqModel* model_;
  nn::Mat memory_;
};

PseudoTokenSequence greedy_decode(const Seq2SeqModel& model,
                                  const FeatureSequence& features,
                                  std::size_t max_len);

struct BeamOptions {
  std::size_t beam = 10;
  std::size_t max_len = 100;
  double length_penalty = 0.0;
};

struct BeamResult {
  PseudoTokenSequence tokens;  // excludes <sos> and <eos>
  double logprob = 0.0;        // includes the <eos> step when finished
  double score = 0.0;          // logprob / length^penalty
  bool finished = false;       // ended with <eos> rather than max_len
};

BeamResult beam_search(const Seq2SeqModel& model, const FeatureSequence& features,
                       const BeamOptions& opts);

// Checkpoint: "PLS2", u8 version, u8 kind (0 = seq2seq), u32 input_dim,
// d_model, ff_dim, encoder_layers, decoder_layers, vocab, tied, sos, eos,
// u64 parameter count, then f32 parameters in registration order.
void write_seq2seq(std::ostream& os, const Seq2SeqModel& model);
void write_seq2seq(const std::filesystem::path& path, const Seq2SeqModel& model);
Seq2SeqModel read_seq2seq(std::istream& is);
Seq2SeqModel read_seq2seq(const std::filesystem::path& path);

}  // namespace pseudolang
