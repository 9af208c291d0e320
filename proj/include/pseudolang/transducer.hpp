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

// Sequence-transducer objective over the emit/shift lattice and a small
// transducer model (encoder, causal label network, additive joint network).
//
// Lattice convention: node (t, u) for frame t in [0, m) and target prefix
// length u in [0, n]. From (t, u) a path either emits y_{u+1} and moves to
// (t, u+1), or emits blank ("shift") and moves to (t+1, u). Every alignment
// ends with a shift out of (m-1, n), so there are C(m-1+n, n) of them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pseudolang/nn.hpp"
#include "pseudolang/training.hpp"

namespace pseudolang {

/// Joint-network outputs: frames x (target_len + 1) x symbols, where
/// symbols = V + 1 and the last symbol is blank.
struct TransducerLattice {
  std::size_t frames = 0;
  std::size_t target_len = 0;
  std::size_t symbols = 0;
  std::vector<double> logits;

  TransducerLattice() = default;
  TransducerLattice(std::size_t m, std::size_t n, std::size_t v_plus_blank)
      : frames(m), target_len(n), symbols(v_plus_blank),
        logits(m * (n + 1) * v_plus_blank, 0.0) {}

  Symbol blank() const { return static_cast<Symbol>(symbols - 1); }
  std::size_t node(std::size_t t, std::size_t u) const { return t * (target_len + 1) + u; }
  std::span<double> at(std::size_t t, std::size_t u) {
    return {logits.data() + node(t, u) * symbols, symbols};
  }
  std::span<const double> at(std::size_t t, std::size_t u) const {
    return {logits.data() + node(t, u) * symbols, symbols};
  }
};

double log_add_exp(double a, double b);

/// Negative log of the summed probability of all alignments. Returns +inf
/// when no alignment exists (m == 0).
double transducer_loss(const TransducerLattice& lattice, std::span<const Symbol> targets);

struct TransducerGradient {
  double loss = 0.0;
  std::vector<double> d_logits;     // same layout as lattice.logits
  std::vector<double> d_log_probs;  // gradient w.r.t. per-node log-softmax outputs
  std::vector<double> alpha;        // frames x (n+1), forward log-probabilities
  std::vector<double> beta;         // frames x (n+1), includes the final shift
  std::vector<double> occupancy;    // frames x (n+1), posterior node mass
};

/// Forward-backward gradient of transducer_loss w.r.t. the logits.
TransducerGradient transducer_grad(const TransducerLattice& lattice,
                                   std::span<const Symbol> targets);

struct TransducerConfig {
  std::size_t input_dim = 0;
  std::size_t d_model = 32;
  std::size_t ff_dim = 64;
  std::size_t encoder_layers = 2;
  std::size_t predictor_layers = 1;
  std::size_t joint_dim = 32;
  std::size_t vocab = 0;  // blank is id `vocab`
  Symbol sos = 0;         // label-network start symbol

  bool operator==(const TransducerConfig&) const = default;
};

class TransducerModel {
 public:
  TransducerModel() = default;
  TransducerModel(const TransducerConfig& config, std::uint64_t seed);

  const TransducerConfig& config() const { return config_; }
  Symbol blank() const { return static_cast<Symbol>(config_.vocab); }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const nn::StackLayout& encoder() const { return encoder_; }
  const nn::StackLayout& predictor() const { return predictor_; }
  const nn::LinearRefs& joint_encoder() const { return joint_enc_; }
  const nn::LinearRefs& joint_predictor() const { return joint_pred_; }
  const nn::LinearRefs& joint_output() const { return joint_out_; }

  static TransducerModel from_values(const TransducerConfig& config,
                                     std::span<const double> values);

 private:
  void build();

  TransducerConfig config_;
  nn::ParamStore params_;
  nn::StackLayout encoder_;
  nn::StackLayout predictor_;
  nn::LinearRefs joint_enc_;
  nn::LinearRefs joint_pred_;
  nn::LinearRefs joint_out_;
};

/// Joint logits for every lattice node of one utterance. `targets` carry no
/// sentinels.
TransducerLattice transducer_lattice(const TransducerModel& model, const nn::Mat& frames,
                                     std::span<const Symbol> targets);

/// Summed transducer loss over a batch; LossValue.tokens counts target
/// symbols plus one final shift per utterance.
LossValue transducer_batch_loss(const TransducerModel& model, const TrainBatch& batch);
GradResult transducer_batch_grad(const TransducerModel& model, const TrainBatch& batch);

TrainResult train_transducer(TransducerModel& model, std::span<const TrainExample> corpus,
                             const TrainOptions& opts, Symbol eos, Symbol pad,
                             const StepCallback& on_step = {});

/// Frame-synchronous greedy search: at each node take the argmax symbol;
/// blank advances the frame, anything else is emitted. At most
/// `max_symbols_per_frame` emissions happen before the frame is forced on.
PseudoTokenSequence transducer_decode_greedy(const TransducerModel& model,
                                             const FeatureSequence& features,
                                             std::size_t max_symbols_per_frame);

// Checkpoint: "PLS2", u8 version, u8 kind (1 = transducer), u32 input_dim,
// d_model, ff_dim, encoder_layers, predictor_layers, joint_dim, vocab, sos,
// u64 parameter count, then f32 parameters in registration order.
void write_transducer(std::ostream& os, const TransducerModel& model);
void write_transducer(const std::filesystem::path& path, const TransducerModel& model);
TransducerModel read_transducer(std::istream& is);
TransducerModel read_transducer(const std::filesystem::path& path);

}  // namespace pseudolang
