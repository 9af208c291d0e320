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

#include "pseudolang/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "pseudolang/checkpoint.hpp"
#include "pseudolang/error.hpp"

namespace pseudolang {

namespace {

constexpr char kEmbeddingName[] = "decoder.embedding";
constexpr char kOutputProjectionName[] = "output_projection";

bool is_vocab_table(const std::string& name) {
  return name == kEmbeddingName || name == kOutputProjectionName;
}

// logits = hidden * table^T
nn::Mat project(const nn::Mat& hidden, std::span<const double> table,
                std::size_t vocab) {
  const std::size_t d = hidden.cols;
  nn::Mat logits(hidden.rows, vocab);
  for (std::size_t i = 0; i < hidden.rows; ++i) {
    const auto h = hidden.row(i);
    for (std::size_t k = 0; k < vocab; ++k) {
      const double* e = table.data() + k * d;
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += h[j] * e[j];
      logits(i, k) = acc;
    }
  }
  return logits;
}

struct UtteranceForward {
  nn::StackTrace encoder;
  nn::StackTrace decoder;
  nn::Mat log_probs;
};

void forward_utterance(const Seq2SeqModel& model, const nn::Mat& frames,
                       std::span<const Symbol> target, UtteranceForward& f) {
  if (target.size() < 2) {
    throw ArgumentError("nll_loss: target needs <sos> and at least one symbol");
  }
  const auto& cfg = model.config();
  const auto& store = model.params();
  const nn::Mat& memory = nn::forward_frames(store, model.encoder(), frames, nullptr, f.encoder);
  const nn::Mat& hidden = nn::forward_tokens(
      store, model.decoder(), target.first(target.size() - 1), &memory, f.decoder);
  nn::Mat logits = project(hidden, store.view(model.output_projection_ref()), cfg.vocab);
  nn::check_finite(logits, "output projection");
  f.log_probs = nn::log_softmax_rows(logits);
}

}  // namespace

Seq2SeqModel::Seq2SeqModel(const Seq2SeqConfig& config, std::uint64_t seed)
    : config_(config) {
  build();
  std::mt19937_64 rng(seed);
  nn::init_params(params_, rng);
}

void Seq2SeqModel::build() {
  if (config_.input_dim == 0 || config_.d_model == 0 || config_.vocab == 0) {
    throw ArgumentError("Seq2SeqModel: input_dim, d_model and vocab must be > 0");
  }
  if (config_.sos >= config_.vocab || config_.eos >= config_.vocab) {
    throw ArgumentError("Seq2SeqModel: sentinel ids outside vocabulary");
  }
  params_ = nn::ParamStore();
  encoder_ = nn::register_stack(params_, "encoder",
                                {config_.input_dim, config_.d_model, config_.ff_dim,
                                 config_.encoder_layers, false, false, false});
  decoder_ = nn::register_stack(params_, "decoder",
                                {config_.vocab, config_.d_model, config_.ff_dim,
                                 config_.decoder_layers, true, true, true});
  output_projection_ =
      config_.tie_embeddings
          ? decoder_.embedding
          : params_.add(kOutputProjectionName, config_.vocab, config_.d_model);
}

Seq2SeqModel Seq2SeqModel::from_values(const Seq2SeqConfig& config,
                                       std::span<const double> values) {
  Seq2SeqModel model;
  model.config_ = config;
  model.build();
  if (values.size() != model.params_.size()) {
    throw ArgumentError("Seq2SeqModel::from_values: parameter count mismatch");
  }
  std::copy(values.begin(), values.end(), model.params_.values().begin());
  return model;
}

void Seq2SeqModel::swap_embeddings(std::size_t vocab, Symbol sos, Symbol eos,
                                   std::uint64_t seed) {
  std::map<std::string, std::vector<double>> kept;
  for (const auto& e : params_.entries()) {
    if (is_vocab_table(e.name)) continue;
    const auto v = params_.view(e.ref);
    kept[e.name].assign(v.begin(), v.end());
  }
  config_.vocab = vocab;
  config_.sos = sos;
  config_.eos = eos;
  build();
  std::mt19937_64 rng(seed);
  for (const auto& e : params_.entries()) {
    if (is_vocab_table(e.name)) {
      nn::init_range(params_, e.name, rng);
    } else {
      const auto& src = kept.at(e.name);
      std::copy(src.begin(), src.end(), params_.view(e.ref).begin());
    }
  }
}

std::string Seq2SeqModel::non_embedding_checksum() const {
  std::string bytes;
  for (const auto& e : params_.entries()) {
    if (is_vocab_table(e.name)) continue;
    bytes += e.name;
    bytes.push_back('\0');
    const auto v = params_.view(e.ref);
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return checkpoint::sha256_hex(bytes);
}

nn::Mat target_log_probs(const Seq2SeqModel& model, const nn::Mat& frames,
                         std::span<const Symbol> target) {
  UtteranceForward f;
  forward_utterance(model, frames, target, f);
  return std::move(f.log_probs);
}

LossValue nll_loss(const Seq2SeqModel& model, const TrainBatch& batch) {
  LossValue loss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto target = batch.target(i);
    UtteranceForward f;
    forward_utterance(model, batch.frames(i), target, f);
    for (std::size_t p = 0; p + 1 < target.size(); ++p) {
      loss.sum -= f.log_probs(p, target[p + 1]);
    }
    loss.tokens += target.size() - 1;
  }
  return loss;
}

GradResult nll_grad(const Seq2SeqModel& model, const TrainBatch& batch) {
  const auto& cfg = model.config();
  const auto& store = model.params();
  GradResult out;
  out.grads.assign(store.size(), 0.0);
  const auto table = store.view(model.output_projection_ref());
  double* d_table = out.grads.data() + model.output_projection_ref().offset;
  const std::size_t d = cfg.d_model;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto target = batch.target(i);
    UtteranceForward f;
    forward_utterance(model, batch.frames(i), target, f);
    const nn::Mat& hidden = f.decoder.output;
    const std::size_t n = target.size() - 1;

    // d loss / d logits = softmax - onehot
    nn::Mat d_logits(n, cfg.vocab);
    for (std::size_t p = 0; p < n; ++p) {
      out.loss.sum -= f.log_probs(p, target[p + 1]);
      for (std::size_t k = 0; k < cfg.vocab; ++k) d_logits(p, k) = std::exp(f.log_probs(p, k));
      d_logits(p, target[p + 1]) -= 1.0;
    }
    out.loss.tokens += n;

    nn::Mat d_hidden(n, d);
    for (std::size_t p = 0; p < n; ++p) {
      const auto h = hidden.row(p);
      auto dh = d_hidden.row(p);
      for (std::size_t k = 0; k < cfg.vocab; ++k) {
        const double g = d_logits(p, k);
        if (g == 0.0) continue;
        const double* e = table.data() + k * d;
        double* de = d_table + k * d;
        for (std::size_t j = 0; j < d; ++j) {
          dh[j] += g * e[j];
          de[j] += g * h[j];
        }
      }
    }
    nn::Mat d_memory(f.encoder.output.rows, d);
    nn::backward_stack(store, model.decoder(), f.decoder, d_hidden, out.grads, &d_memory);
    nn::backward_stack(store, model.encoder(), f.encoder, d_memory, out.grads, nullptr);
  }
  return out;
}

TrainResult train(Seq2SeqModel& model, std::span<const TrainExample> corpus,
                  const TrainOptions& opts, Symbol pad, const StepCallback& on_step) {
  const auto& cfg = model.config();
  return run_training(
      model.params().values(), corpus.size(), opts,
      [&](std::span<const std::size_t> idx) {
        return nll_grad(model, make_batch(corpus, idx, cfg.sos, cfg.eos, pad));
      },
      on_step);
}

DecodingSession::DecodingSession(const Seq2SeqModel& model,
                                 const FeatureSequence& features)
    : model_(&model) {
  nn::StackTrace trace;
  memory_ = nn::forward_frames(model.params(), model.encoder(), to_mat(features),
                               nullptr, trace);
}

std::vector<double> DecodingSession::next_log_probs(std::span<const Symbol> prefix) const {
  const auto& cfg = model_->config();
  std::vector<Symbol> input;
  input.reserve(prefix.size() + 1);
  input.push_back(cfg.sos);
  input.insert(input.end(), prefix.begin(), prefix.end());
  nn::StackTrace trace;
  const nn::Mat& hidden =
      nn::forward_tokens(model_->params(), model_->decoder(), input, &memory_, trace);
  nn::Mat last(1, hidden.cols);
  std::copy(hidden.row(hidden.rows - 1).begin(), hidden.row(hidden.rows - 1).end(),
            last.v.begin());
  const nn::Mat lp = nn::log_softmax_rows(
      project(last, model_->params().view(model_->output_projection_ref()), cfg.vocab));
  return lp.v;
}

PseudoTokenSequence greedy_decode(const Seq2SeqModel& model,
                                  const FeatureSequence& features,
                                  std::size_t max_len) {
  if (max_len == 0) throw ArgumentError("greedy_decode: max_len must be >= 1");
  DecodingSession session(model, features);
  PseudoTokenSequence out;
  out.utterance_id = features.utterance_id;
  while (out.symbols.size() < max_len) {
    const auto lp = session.next_log_probs(out.symbols);
    const auto best = static_cast<Symbol>(
        std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == model.config().eos) break;
    out.symbols.push_back(best);
  }
  return out;
}

BeamResult beam_search(const Seq2SeqModel& model, const FeatureSequence& features,
                       const BeamOptions& opts) {
  if (opts.beam == 0) throw ArgumentError("beam_search: beam must be >= 1");
  if (opts.max_len == 0) throw ArgumentError("beam_search: max_len must be >= 1");
  const Symbol eos = model.config().eos;
  DecodingSession session(model, features);

  struct Hyp {
    std::vector<Symbol> tokens;
    double logprob = 0.0;
  };
  struct Finished {
    std::vector<Symbol> tokens;
    double logprob = 0.0;
    std::size_t length = 0;
    bool finished = false;
  };

  std::vector<Hyp> active{Hyp{}};
  std::vector<Finished> done;
  for (std::size_t step = 0; step < opts.max_len && !active.empty(); ++step) {
    // Candidates are generated beam-major, token-minor; the stable sort then
    // resolves equal scores toward earlier beams and lower token ids.
    std::vector<Hyp> cand;
    for (const auto& h : active) {
      const auto lp = session.next_log_probs(h.tokens);
      std::vector<Symbol> order(lp.size());
      for (Symbol k = 0; k < order.size(); ++k) order[k] = k;
      const std::size_t keep = std::min(opts.beam, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                        [&](Symbol a, Symbol b) {
                          return lp[a] > lp[b] || (lp[a] == lp[b] && a < b);
                        });
      std::sort(order.begin(), order.begin() + static_cast<long>(keep));
      for (std::size_t r = 0; r < keep; ++r) {
        Hyp c{h.tokens, h.logprob + lp[order[r]]};
        c.tokens.push_back(order[r]);
        cand.push_back(std::move(c));
      }
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const Hyp& a, const Hyp& b) { return a.logprob > b.logprob; });
    cand.resize(std::min(cand.size(), opts.beam));
    active.clear();
    for (auto& c : cand) {
      if (c.tokens.back() == eos) {
        const std::size_t len = c.tokens.size();
        c.tokens.pop_back();
        done.push_back({std::move(c.tokens), c.logprob, len, true});
      } else {
        active.push_back(std::move(c));
      }
    }
  }
  for (auto& h : active) {
    const std::size_t len = h.tokens.size();
    done.push_back({std::move(h.tokens), h.logprob, len, false});
  }

  auto score = [&](const Finished& f) {
    if (opts.length_penalty == 0.0) return f.logprob;
    return f.logprob / std::pow(static_cast<double>(std::max<std::size_t>(f.length, 1)),
                                opts.length_penalty);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i) {
    if (score(done[i]) > score(done[best])) best = i;
  }
  BeamResult result;
  result.tokens.utterance_id = features.utterance_id;
  result.tokens.symbols = std::move(done[best].tokens);
  result.logprob = done[best].logprob;
  result.score = score(done[best]);
  result.finished = done[best].finished;
  return result;
}

void write_seq2seq(std::ostream& os, const Seq2SeqModel& model) {
  const auto& c = model.config();
  const std::uint32_t arch[] = {
      static_cast<std::uint32_t>(c.input_dim), static_cast<std::uint32_t>(c.d_model),
      static_cast<std::uint32_t>(c.ff_dim), static_cast<std::uint32_t>(c.encoder_layers),
      static_cast<std::uint32_t>(c.decoder_layers), static_cast<std::uint32_t>(c.vocab),
      c.tie_embeddings ? 1u : 0u, c.sos, c.eos};
  checkpoint::write_header(os, checkpoint::Kind::kSeq2Seq, arch);
  checkpoint::write_params(os, model.params().values());
}

void write_seq2seq(const std::filesystem::path& path, const Seq2SeqModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_seq2seq(os, model);
}

Seq2SeqModel read_seq2seq(std::istream& is) {
  const auto a = checkpoint::read_header(is, checkpoint::Kind::kSeq2Seq, 9);
  Seq2SeqConfig c;
  c.input_dim = a[0];
  c.d_model = a[1];
  c.ff_dim = a[2];
  c.encoder_layers = a[3];
  c.decoder_layers = a[4];
  c.vocab = a[5];
  c.tie_embeddings = a[6] != 0;
  c.sos = a[7];
  c.eos = a[8];
  std::size_t count = 0;
  try {
    count = Seq2SeqModel(c, 0).params().size();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  const auto values = checkpoint::read_params(is, count);
  return Seq2SeqModel::from_values(c, values);
}

Seq2SeqModel read_seq2seq(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_seq2seq(is);
}

}  // namespace pseudolang
