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

#include "pseudolang/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "pseudolang/checkpoint.hpp"
#include "pseudolang/error.hpp"

namespace pseudolang {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_targets(const TransducerLattice& lat, std::span<const Symbol> targets) {
  if (targets.size() != lat.target_len) {
    throw ArgumentError("transducer: target length " + std::to_string(targets.size()) +
                        " != lattice target length " + std::to_string(lat.target_len));
  }
  if (lat.symbols < 2) throw ArgumentError("transducer: lattice needs >= 2 symbols");
  for (Symbol y : targets) {
    if (y >= lat.blank()) {
      throw ArgumentError("transducer: target id " + std::to_string(y) +
                          " is blank or outside the vocabulary");
    }
  }
}

// Per-node log-softmax.
std::vector<double> node_log_probs(const TransducerLattice& lat) {
  std::vector<double> lp(lat.logits.size());
  const std::size_t v = lat.symbols;
  for (std::size_t off = 0; off < lat.logits.size(); off += v) {
    const double* z = lat.logits.data() + off;
    const double mx = *std::max_element(z, z + v);
    double sum = 0.0;
    for (std::size_t k = 0; k < v; ++k) sum += std::exp(z[k] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t k = 0; k < v; ++k) lp[off + k] = z[k] - lse;
  }
  return lp;
}

struct Recursions {
  std::vector<double> log_probs, alpha, beta;
  double log_likelihood = kNegInf;
};

Recursions run_recursions(const TransducerLattice& lat, std::span<const Symbol> y,
                          bool with_beta) {
  Recursions r;
  const std::size_t m = lat.frames, n = lat.target_len, v = lat.symbols;
  if (m == 0) return r;
  r.log_probs = node_log_probs(lat);
  const Symbol blank = lat.blank();
  auto shift = [&](std::size_t t, std::size_t u) {
    return r.log_probs[lat.node(t, u) * v + blank];
  };
  auto emit = [&](std::size_t t, std::size_t u) {
    return r.log_probs[lat.node(t, u) * v + y[u]];
  };

  r.alpha.assign(m * (n + 1), kNegInf);
  r.alpha[0] = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t u = 0; u <= n; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = r.alpha[lat.node(t - 1, u)] + shift(t - 1, u);
      if (u > 0) a = log_add_exp(a, r.alpha[lat.node(t, u - 1)] + emit(t, u - 1));
      r.alpha[lat.node(t, u)] = a;
    }
  }
  r.log_likelihood = r.alpha[lat.node(m - 1, n)] + shift(m - 1, n);

  if (with_beta) {
    r.beta.assign(m * (n + 1), kNegInf);
    for (std::size_t t = m; t-- > 0;) {
      for (std::size_t u = n + 1; u-- > 0;) {
        double b = kNegInf;
        if (t + 1 < m) {
          b = r.beta[lat.node(t + 1, u)] + shift(t, u);
        } else if (u == n) {
          b = shift(t, u);  // final shift leaves the lattice
        }
        if (u < n) b = log_add_exp(b, r.beta[lat.node(t, u + 1)] + emit(t, u));
        r.beta[lat.node(t, u)] = b;
      }
    }
  }
  return r;
}

}  // namespace

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

double transducer_loss(const TransducerLattice& lattice, std::span<const Symbol> targets) {
  check_targets(lattice, targets);
  if (lattice.frames == 0) return std::numeric_limits<double>::infinity();
  return -run_recursions(lattice, targets, false).log_likelihood;
}

TransducerGradient transducer_grad(const TransducerLattice& lat,
                                   std::span<const Symbol> targets) {
  check_targets(lat, targets);
  TransducerGradient g;
  g.d_logits.assign(lat.logits.size(), 0.0);
  g.d_log_probs.assign(lat.logits.size(), 0.0);
  if (lat.frames == 0) {
    g.loss = std::numeric_limits<double>::infinity();
    return g;
  }
  Recursions r = run_recursions(lat, targets, true);
  const double log_z = r.log_likelihood;
  g.loss = -log_z;
  const std::size_t m = lat.frames, n = lat.target_len, v = lat.symbols;
  const Symbol blank = lat.blank();
  g.occupancy.assign(m * (n + 1), 0.0);
  if (log_z == kNegInf) {
    g.alpha = std::move(r.alpha);
    g.beta = std::move(r.beta);
    return g;
  }

  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t u = 0; u <= n; ++u) {
      const std::size_t node = lat.node(t, u);
      const std::size_t base = node * v;
      const double a = r.alpha[node];
      g.occupancy[node] = std::exp(a + r.beta[node] - log_z);

      double shift_tail = kNegInf;
      if (t + 1 < m) {
        shift_tail = r.beta[lat.node(t + 1, u)];
      } else if (u == n) {
        shift_tail = 0.0;
      }
      if (shift_tail != kNegInf) {
        g.d_log_probs[base + blank] =
            -std::exp(a + r.log_probs[base + blank] + shift_tail - log_z);
      }
      if (u < n) {
        g.d_log_probs[base + targets[u]] =
            -std::exp(a + r.log_probs[base + targets[u]] + r.beta[lat.node(t, u + 1)] - log_z);
      }
      // Through the log-softmax: dz_k = dlp_k - p_k * sum_j dlp_j.
      double total = 0.0;
      for (std::size_t k = 0; k < v; ++k) total += g.d_log_probs[base + k];
      for (std::size_t k = 0; k < v; ++k) {
        g.d_logits[base + k] =
            g.d_log_probs[base + k] - std::exp(r.log_probs[base + k]) * total;
      }
    }
  }
  g.alpha = std::move(r.alpha);
  g.beta = std::move(r.beta);
  return g;
}

// ---- model ----------------------------------------------------------------

TransducerModel::TransducerModel(const TransducerConfig& config, std::uint64_t seed)
    : config_(config) {
  build();
  std::mt19937_64 rng(seed);
  nn::init_params(params_, rng);
}

void TransducerModel::build() {
  const auto& c = config_;
  if (c.input_dim == 0 || c.d_model == 0 || c.vocab == 0 || c.joint_dim == 0) {
    throw ArgumentError("TransducerModel: dims and vocab must be > 0");
  }
  if (c.sos >= c.vocab) throw ArgumentError("TransducerModel: sos outside vocabulary");
  params_ = nn::ParamStore();
  encoder_ = nn::register_stack(params_, "encoder",
                                {c.input_dim, c.d_model, c.ff_dim, c.encoder_layers,
                                 false, false, false});
  predictor_ = nn::register_stack(params_, "predictor",
                                  {c.vocab, c.d_model, c.ff_dim, c.predictor_layers,
                                   true, true, false});
  joint_enc_ = {params_.add("joint.encoder.w", c.d_model, c.joint_dim),
                params_.add("joint.encoder.b", 1, c.joint_dim)};
  joint_pred_ = {params_.add("joint.predictor.w", c.d_model, c.joint_dim),
                 params_.add("joint.predictor.b", 1, c.joint_dim)};
  joint_out_ = {params_.add("joint.output.w", c.joint_dim, c.vocab + 1),
                params_.add("joint.output.b", 1, c.vocab + 1)};
}

TransducerModel TransducerModel::from_values(const TransducerConfig& config,
                                             std::span<const double> values) {
  TransducerModel model;
  model.config_ = config;
  model.build();
  if (values.size() != model.params_.size()) {
    throw ArgumentError("TransducerModel::from_values: parameter count mismatch");
  }
  std::copy(values.begin(), values.end(), model.params_.values().begin());
  return model;
}

namespace {

struct JointTrace {
  nn::Mat enc_proj;   // m x J
  nn::Mat pred_proj;  // (n+1) x J
  std::vector<double> hidden;  // m x (n+1) x J, tanh outputs
};

TransducerLattice joint_forward(const TransducerModel& model, const nn::Mat& enc,
                                const nn::Mat& pred, JointTrace& tr) {
  const auto& store = model.params();
  tr.enc_proj = nn::linear(store, model.joint_encoder(), enc);
  tr.pred_proj = nn::linear(store, model.joint_predictor(), pred);
  const std::size_t m = enc.rows, n1 = pred.rows, jd = model.config().joint_dim;
  const std::size_t v = model.config().vocab + 1;
  TransducerLattice lat(m, n1 - 1, v);
  tr.hidden.assign(m * n1 * jd, 0.0);
  const auto w = store.view(model.joint_output().w);
  const auto b = store.view(model.joint_output().b);
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t u = 0; u < n1; ++u) {
      double* h = tr.hidden.data() + (t * n1 + u) * jd;
      for (std::size_t j = 0; j < jd; ++j) h[j] = std::tanh(tr.enc_proj(t, j) + tr.pred_proj(u, j));
      auto z = lat.at(t, u);
      std::copy(b.begin(), b.end(), z.begin());
      for (std::size_t j = 0; j < jd; ++j) {
        const double* wr = w.data() + j * v;
        for (std::size_t k = 0; k < v; ++k) z[k] += h[j] * wr[k];
      }
    }
  }
  return lat;
}

struct UtteranceForward {
  nn::StackTrace encoder, predictor;
  JointTrace joint;
  TransducerLattice lattice;
};

std::vector<Symbol> predictor_input(const TransducerModel& model,
                                    std::span<const Symbol> targets) {
  std::vector<Symbol> in;
  in.reserve(targets.size() + 1);
  in.push_back(model.config().sos);
  in.insert(in.end(), targets.begin(), targets.end());
  return in;
}

void forward_utterance(const TransducerModel& model, const nn::Mat& frames,
                       std::span<const Symbol> targets, UtteranceForward& f) {
  const auto& store = model.params();
  const nn::Mat& enc = nn::forward_frames(store, model.encoder(), frames, nullptr, f.encoder);
  const nn::Mat& pred = nn::forward_tokens(store, model.predictor(),
                                           predictor_input(model, targets), nullptr,
                                           f.predictor);
  f.lattice = joint_forward(model, enc, pred, f.joint);
  for (double z : f.lattice.logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite activation in joint network");
  }
}

// Strips <sos> and <eos> from a batch target.
std::span<const Symbol> bare_targets(const TrainBatch& batch, std::size_t i) {
  const auto t = batch.target(i);
  return t.subspan(1, t.size() - 2);
}

}  // namespace

TransducerLattice transducer_lattice(const TransducerModel& model, const nn::Mat& frames,
                                     std::span<const Symbol> targets) {
  UtteranceForward f;
  forward_utterance(model, frames, targets, f);
  return std::move(f.lattice);
}

LossValue transducer_batch_loss(const TransducerModel& model, const TrainBatch& batch) {
  LossValue loss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto y = bare_targets(batch, i);
    UtteranceForward f;
    forward_utterance(model, batch.frames(i), y, f);
    loss.sum += transducer_loss(f.lattice, y);
    loss.tokens += y.size() + 1;
  }
  return loss;
}

GradResult transducer_batch_grad(const TransducerModel& model, const TrainBatch& batch) {
  const auto& store = model.params();
  const auto& cfg = model.config();
  GradResult out;
  out.grads.assign(store.size(), 0.0);
  const std::size_t jd = cfg.joint_dim, v = cfg.vocab + 1;
  const auto w_out = store.view(model.joint_output().w);
  double* dw_out = out.grads.data() + model.joint_output().w.offset;
  double* db_out = out.grads.data() + model.joint_output().b.offset;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto y = bare_targets(batch, i);
    UtteranceForward f;
    forward_utterance(model, batch.frames(i), y, f);
    const TransducerGradient g = transducer_grad(f.lattice, y);
    if (!std::isfinite(g.loss)) {
      throw NumericError("transducer loss is infinite for " + batch.utterance_ids[i]);
    }
    out.loss.sum += g.loss;
    out.loss.tokens += y.size() + 1;

    const std::size_t m = f.lattice.frames, n1 = f.lattice.target_len + 1;
    nn::Mat d_enc_proj(m, jd), d_pred_proj(n1, jd);
    std::vector<double> dh(jd);
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t u = 0; u < n1; ++u) {
        const std::size_t node = t * n1 + u;
        const double* h = f.joint.hidden.data() + node * jd;
        const double* dz = g.d_logits.data() + node * v;
        for (std::size_t k = 0; k < v; ++k) db_out[k] += dz[k];
        for (std::size_t j = 0; j < jd; ++j) {
          const double* wr = w_out.data() + j * v;
          double* dwr = dw_out + j * v;
          double acc = 0.0;
          for (std::size_t k = 0; k < v; ++k) {
            acc += wr[k] * dz[k];
            dwr[k] += h[j] * dz[k];
          }
          const double dpre = acc * (1.0 - h[j] * h[j]);
          d_enc_proj(t, j) += dpre;
          d_pred_proj(u, j) += dpre;
        }
      }
    }
    const nn::Mat d_enc = nn::linear_backward(store, model.joint_encoder(),
                                              f.encoder.output, d_enc_proj, out.grads);
    const nn::Mat d_pred = nn::linear_backward(store, model.joint_predictor(),
                                               f.predictor.output, d_pred_proj, out.grads);
    nn::backward_stack(store, model.predictor(), f.predictor, d_pred, out.grads, nullptr);
    nn::backward_stack(store, model.encoder(), f.encoder, d_enc, out.grads, nullptr);
  }
  return out;
}

TrainResult train_transducer(TransducerModel& model, std::span<const TrainExample> corpus,
                             const TrainOptions& opts, Symbol eos, Symbol pad,
                             const StepCallback& on_step) {
  const Symbol sos = model.config().sos;
  return run_training(
      model.params().values(), corpus.size(), opts,
      [&](std::span<const std::size_t> idx) {
        return transducer_batch_grad(model, make_batch(corpus, idx, sos, eos, pad));
      },
      on_step);
}

PseudoTokenSequence transducer_decode_greedy(const TransducerModel& model,
                                             const FeatureSequence& features,
                                             std::size_t max_symbols_per_frame) {
  if (max_symbols_per_frame == 0) {
    throw ArgumentError("transducer_decode_greedy: max_symbols_per_frame must be >= 1");
  }
  const auto& store = model.params();
  nn::StackTrace enc_trace;
  const nn::Mat enc =
      nn::forward_frames(store, model.encoder(), to_mat(features), nullptr, enc_trace);
  const nn::Mat enc_proj = nn::linear(store, model.joint_encoder(), enc);

  PseudoTokenSequence out;
  out.utterance_id = features.utterance_id;
  auto predictor_state = [&]() {
    nn::StackTrace tr;
    const nn::Mat& pred = nn::forward_tokens(store, model.predictor(),
                                             predictor_input(model, out.symbols), nullptr, tr);
    nn::Mat last(1, pred.cols);
    std::copy(pred.row(pred.rows - 1).begin(), pred.row(pred.rows - 1).end(), last.v.begin());
    return nn::linear(store, model.joint_predictor(), last);
  };

  const std::size_t jd = model.config().joint_dim, v = model.config().vocab + 1;
  const auto w = store.view(model.joint_output().w);
  const auto b = store.view(model.joint_output().b);
  nn::Mat pred_proj = predictor_state();
  std::vector<double> h(jd), z(v);
  for (std::size_t t = 0; t < enc.rows; ++t) {
    for (std::size_t emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
      for (std::size_t j = 0; j < jd; ++j) h[j] = std::tanh(enc_proj(t, j) + pred_proj(0, j));
      std::copy(b.begin(), b.end(), z.begin());
      for (std::size_t j = 0; j < jd; ++j) {
        for (std::size_t k = 0; k < v; ++k) z[k] += h[j] * w[j * v + k];
      }
      const auto best = static_cast<Symbol>(std::max_element(z.begin(), z.end()) - z.begin());
      if (best == model.blank()) break;
      out.symbols.push_back(best);
      pred_proj = predictor_state();
    }
  }
  return out;
}

void write_transducer(std::ostream& os, const TransducerModel& model) {
  const auto& c = model.config();
  const std::uint32_t arch[] = {
      static_cast<std::uint32_t>(c.input_dim), static_cast<std::uint32_t>(c.d_model),
      static_cast<std::uint32_t>(c.ff_dim), static_cast<std::uint32_t>(c.encoder_layers),
      static_cast<std::uint32_t>(c.predictor_layers), static_cast<std::uint32_t>(c.joint_dim),
      static_cast<std::uint32_t>(c.vocab), c.sos};
  checkpoint::write_header(os, checkpoint::Kind::kTransducer, arch);
  checkpoint::write_params(os, model.params().values());
}

void write_transducer(const std::filesystem::path& path, const TransducerModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_transducer(os, model);
}

TransducerModel read_transducer(std::istream& is) {
  const auto a = checkpoint::read_header(is, checkpoint::Kind::kTransducer, 8);
  TransducerConfig c;
  c.input_dim = a[0];
  c.d_model = a[1];
  c.ff_dim = a[2];
  c.encoder_layers = a[3];
  c.predictor_layers = a[4];
  c.joint_dim = a[5];
  c.vocab = a[6];
  c.sos = a[7];
  std::size_t count = 0;
  try {
    count = TransducerModel(c, 0).params().size();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  return TransducerModel::from_values(c, checkpoint::read_params(is, count));
}

TransducerModel read_transducer(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_transducer(is);
}

}  // namespace pseudolang
