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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pseudolang/checkpoint.hpp"
#include "pseudolang/error.hpp"
#include "pseudolang/eval.hpp"
#include "pseudolang/seq2seq.hpp"
#include "pseudolang/synth.hpp"
#include "support.hpp"

using namespace pseudolang;

namespace {

using Rows = std::vector<std::vector<double>>;

// Second implementation of the forward pass, written against parameter names
// with plain nested vectors.
struct Reference {
  const nn::ParamStore& store;
  std::size_t d;

  std::vector<double> get(const std::string& name) const {
    const auto ref = store.find(name);
    REQUIRE(ref.has_value());
    const auto v = store.view(*ref);
    return {v.begin(), v.end()};
  }

  Rows affine(const Rows& x, const std::string& p) const {
    const auto w = get(p + ".w"), b = get(p + ".b");
    const std::size_t out = b.size(), in = w.size() / out;
    Rows y(x.size(), std::vector<double>(out));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t k = 0; k < in; ++k) s += x[i][k] * w[k * out + o];
        y[i][o] = s;
      }
    return y;
  }

  Rows norm(const Rows& x, const std::string& p) const {
    const auto g = get(p + ".gain"), b = get(p + ".bias");
    Rows y = x;
    for (auto& r : y) {
      double mu = 0, var = 0;
      for (double v : r) mu += v;
      mu /= double(r.size());
      for (double v : r) var += (v - mu) * (v - mu);
      var /= double(r.size());
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
    }
    return y;
  }

  Rows attend(const Rows& xq, const Rows& xkv, const std::string& p, bool causal) const {
    const Rows q = affine(xq, p + ".q"), k = affine(xkv, p + ".k"), v = affine(xkv, p + ".v");
    Rows ctx(xq.size(), std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < xq.size(); ++i) {
      const std::size_t visible = causal ? i + 1 : xkv.size();
      std::vector<double> s(visible);
      for (std::size_t j = 0; j < visible; ++j) {
        for (std::size_t c = 0; c < d; ++c) s[j] += q[i][c] * k[j][c];
        s[j] /= std::sqrt(double(d));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < visible; ++j)
        for (std::size_t c = 0; c < d; ++c) ctx[i][c] += s[j] / z * v[j][c];
    }
    return affine(ctx, p + ".o");
  }

  static void add(Rows& x, const Rows& y) {
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x[i].size(); ++j) x[i][j] += y[i][j];
  }

  static void positions(Rows& x) {
    const std::size_t dm = x.empty() ? 0 : x[0].size();
    for (std::size_t p = 0; p < x.size(); ++p)
      for (std::size_t i = 0; i < dm; ++i) {
        const double angle = double(p) / std::pow(10000.0, double(i - i % 2) / double(dm));
        x[p][i] += i % 2 == 0 ? std::sin(angle) : std::cos(angle);
      }
  }

  Rows stack(Rows x, const std::string& name, std::size_t layers, bool causal,
             const Rows* memory) const {
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string p = name + ".block" + std::to_string(l);
      add(x, attend(norm(x, p + ".self_norm"), norm(x, p + ".self_norm"), p + ".self_attn", causal));
      if (memory) add(x, attend(norm(x, p + ".cross_norm"), *memory, p + ".cross_attn", false));
      Rows h = affine(norm(x, p + ".ff_norm"), p + ".ff.in");
      for (auto& r : h)
        for (double& v : r) v = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
      add(x, affine(h, p + ".ff.out"));
    }
    return norm(x, name + ".final_norm");
  }

  // Summed NLL of `target` (with sentinels) given frames.
  double loss(const Seq2SeqConfig& cfg, const FeatureSequence& f,
              const std::vector<Symbol>& target) const {
    Rows x(f.frames());
    for (std::size_t i = 0; i < f.frames(); ++i) x[i].assign(f.frame(i).begin(), f.frame(i).end());
    Rows enc = affine(x, "encoder.input");
    positions(enc);
    const Rows memory = stack(enc, "encoder", cfg.encoder_layers, false, nullptr);

    const auto emb = get("decoder.embedding");
    const auto out = cfg.tie_embeddings ? emb : get("output_projection");
    Rows y(target.size() - 1, std::vector<double>(d));
    for (std::size_t i = 0; i + 1 < target.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) y[i][j] = emb[target[i] * d + j] * std::sqrt(double(d));
    positions(y);
    const Rows h = stack(y, "decoder", cfg.decoder_layers, true, &memory);
    double total = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      std::vector<double> logits(cfg.vocab, 0.0);
      for (std::size_t k = 0; k < cfg.vocab; ++k)
        for (std::size_t j = 0; j < d; ++j) logits[k] += h[i][j] * out[k * d + j];
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (double l : logits) z += std::exp(l - mx);
      total -= logits[target[i + 1]] - mx - std::log(z);
    }
    return total;
  }
};

Seq2SeqConfig config(std::size_t input_dim, std::size_t d, std::size_t le, std::size_t ld,
                     std::size_t vocab, bool tied = true) {
  Seq2SeqConfig c;
  c.input_dim = input_dim;
  c.d_model = d;
  c.ff_dim = 2 * d;
  c.encoder_layers = le;
  c.decoder_layers = ld;
  c.vocab = vocab;
  c.tie_embeddings = tied;
  c.sos = static_cast<Symbol>(vocab - 3);
  c.eos = static_cast<Symbol>(vocab - 2);
  return c;
}

Symbol pad_of(const Seq2SeqConfig& c) { return static_cast<Symbol>(c.vocab - 1); }

std::vector<TrainExample> random_examples(std::mt19937_64& rng, std::size_t count,
                                          std::size_t dim, std::size_t labels,
                                          std::size_t max_frames = 7, std::size_t max_targets = 5) {
  std::vector<TrainExample> ex;
  for (std::size_t i = 0; i < count; ++i) {
    PseudoTokenSequence t;
    t.utterance_id = "u" + std::to_string(i);
    t.symbols.resize(1 + rng() % max_targets);
    for (auto& s : t.symbols) s = static_cast<Symbol>(rng() % labels);
    ex.push_back({pltest::random_features(rng, 2 + rng() % (max_frames - 1), dim, t.utterance_id), t});
  }
  return ex;
}

}  // namespace

TEST_CASE("uniform output gives ln V per token") {
  std::mt19937_64 rng(1);
  for (std::size_t vocab : {4, 5, 7, 40}) {
    Seq2SeqConfig c = config(3, 8, 1, 1, vocab);
    Seq2SeqModel m(c, 2);
    for (auto& x : m.embedding()) x = 0.0;
    const auto ex = random_examples(rng, 3, 3, vocab - 3);
    const auto loss = nll_loss(m, make_batch(ex, c.sos, c.eos, pad_of(c)));
    CHECK(std::abs(loss.mean() - std::log(double(vocab))) < 1e-6);
  }
}

TEST_CASE("two-symbol vocabulary at probability one half costs ln 2") {
  std::mt19937_64 rng(31);
  Seq2SeqConfig c = config(3, 8, 1, 1, 2);
  c.sos = 0;
  c.eos = 1;
  Seq2SeqModel m(c, 1);
  for (auto& x : m.embedding()) x = 0.0;
  const std::vector<Symbol> target = {0, 1};  // <sos> then <eos>
  const auto lp = target_log_probs(m, to_mat(pltest::random_features(rng, 3, 3)), target);
  CHECK(-lp(0, 1) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
}

TEST_CASE("loss matches the independent reference forward") {
  std::mt19937_64 rng(2);
  for (bool tied : {true, false}) {
    const Seq2SeqConfig c = config(3, 4, 2, 2, 5, tied);
    const Seq2SeqModel m(c, 3);
    const auto ex = random_examples(rng, 3, 3, 2);
    const auto batch = make_batch(ex, c.sos, c.eos, pad_of(c));
    const Reference ref{m.params(), c.d_model};
    double expected = 0;
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const auto t = batch.target(i);
      expected += ref.loss(c, ex[i].features, {t.begin(), t.end()});
    }
    CHECK(nll_loss(m, batch).sum == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937_64 rng(3);
  for (bool tied : {true, false}) {
    const Seq2SeqConfig c = config(4, 8, 1, 1, 7, tied);
    Seq2SeqModel m(c, 4);
    std::vector<TrainExample> ex;
    for (int i = 0; i < 2; ++i) {
      PseudoTokenSequence t{"u", {}};
      for (int j = 0; j < 4; ++j) t.symbols.push_back(static_cast<Symbol>(rng() % 4));
      ex.push_back({pltest::random_features(rng, 5, 4), t});
    }
    const auto batch = make_batch(ex, c.sos, c.eos, pad_of(c));
    const auto g = nll_grad(m, batch);
    CHECK(g.loss.sum == doctest::Approx(nll_loss(m, batch).sum));
    auto& v = m.params().values();
    for (int s = 0; s < 200; ++s) {
      const std::size_t i = rng() % v.size();
      const double keep = v[i], h = 1e-3;
      v[i] = keep + h;
      const double up = nll_loss(m, batch).sum;
      v[i] = keep - h;
      const double down = nll_loss(m, batch).sum;
      v[i] = keep;
      REQUIRE(pltest::rel_err(g.grads[i], (up - down) / (2 * h)) < 1e-4);
    }
  }
}

TEST_CASE("tied gradient is the sum of the two role gradients") {
  std::mt19937_64 rng(5);
  const Seq2SeqConfig tc = config(3, 8, 1, 1, 9, true);
  const Seq2SeqModel tied(tc, 6);
  Seq2SeqConfig uc = tc;
  uc.tie_embeddings = false;
  Seq2SeqModel untied(uc, 0);
  // Same weights with the table copied into both roles.
  for (const auto& e : untied.params().entries()) {
    const auto src = tied.params().view(*tied.params().find(
        e.name == "output_projection" ? "decoder.embedding" : e.name));
    std::copy(src.begin(), src.end(), untied.params().view(e.ref).begin());
  }
  const auto ex = random_examples(rng, 3, 3, 6);
  const auto gt = nll_grad(tied, make_batch(ex, tc.sos, tc.eos, pad_of(tc)));
  const auto gu = nll_grad(untied, make_batch(ex, uc.sos, uc.eos, pad_of(uc)));
  CHECK(gt.loss.sum == doctest::Approx(gu.loss.sum).epsilon(1e-12));
  const auto emb = tied.embedding_ref();
  const auto ue = untied.embedding_ref(), uo = untied.output_projection_ref();
  for (std::size_t i = 0; i < emb.size(); ++i)
    CHECK(gt.grads[emb.offset + i] ==
          doctest::Approx(gu.grads[ue.offset + i] + gu.grads[uo.offset + i]).epsilon(1e-10));
}

TEST_CASE("embedding rows of absent tokens get exactly zero gradient when untied") {
  std::mt19937_64 rng(7);
  const Seq2SeqConfig c = config(3, 8, 1, 1, 10, false);
  const Seq2SeqModel m(c, 8);
  const auto ex = random_examples(rng, 3, 3, 3);  // labels 0..2 only
  const auto g = nll_grad(m, make_batch(ex, c.sos, c.eos, pad_of(c)));
  const auto e = m.embedding_ref();
  for (Symbol tok = 3; tok < c.vocab; ++tok) {
    if (tok == c.sos) continue;
    for (std::size_t j = 0; j < c.d_model; ++j) CHECK(g.grads[e.offset + tok * c.d_model + j] == 0.0);
  }
}

TEST_CASE("tied storage is one array") {
  Seq2SeqModel m(config(3, 8, 1, 1, 6), 1);
  CHECK(m.embedding_ref().offset == m.output_projection_ref().offset);
  m.embedding()[5] = 42.0;
  CHECK(m.output_projection()[5] == 42.0);
  CHECK(m.embedding().data() == m.output_projection().data());
}

TEST_CASE("softmax outputs sum to one and decoding is causal") {
  std::mt19937_64 rng(9);
  const Seq2SeqConfig c = config(3, 8, 2, 2, 8);
  const Seq2SeqModel m(c, 10);
  const auto f = pltest::random_features(rng, 6, 3);
  const std::vector<Symbol> target = {c.sos, 1, 2, 3, 4, c.eos};
  const auto lp = target_log_probs(m, to_mat(f), target);
  for (std::size_t i = 0; i < lp.rows; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < lp.cols; ++k) s += std::exp(lp(i, k));
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  for (std::size_t t = 1; t < target.size() - 1; ++t) {
    auto changed = target;
    changed[t] = static_cast<Symbol>((changed[t] + 2) % 5);
    const auto lp2 = target_log_probs(m, to_mat(f), changed);
    for (std::size_t p = 0; p < t; ++p)
      for (std::size_t k = 0; k < lp.cols; ++k) REQUIRE(lp2(p, k) == lp(p, k));
  }
}

TEST_CASE("padding does not change any utterance's loss") {
  std::mt19937_64 rng(11);
  const Seq2SeqConfig c = config(3, 8, 1, 1, 8);
  const Seq2SeqModel m(c, 12);
  const auto ex = random_examples(rng, 4, 3, 5, 12, 8);
  const double together = nll_loss(m, make_batch(ex, c.sos, c.eos, pad_of(c))).sum;
  double apart = 0;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const std::vector<std::size_t> one = {i};
    apart += nll_loss(m, make_batch(ex, one, c.sos, c.eos, pad_of(c))).sum;
  }
  CHECK(together == doctest::Approx(apart).epsilon(1e-12));
}

TEST_CASE("lr = 0 leaves parameters bit-identical") {
  std::mt19937_64 rng(13);
  const Seq2SeqConfig c = config(3, 8, 1, 1, 8);
  Seq2SeqModel m(c, 14);
  const auto before = m.params().values();
  TrainOptions o;
  o.steps = 5;
  o.lr = 0.0;
  train(m, random_examples(rng, 4, 3, 5), o, pad_of(c));
  CHECK(m.params().values() == before);
}

TEST_CASE("non-finite parameters abort training with the step index") {
  std::mt19937_64 rng(15);
  const Seq2SeqConfig c = config(3, 8, 1, 1, 8);
  Seq2SeqModel m(c, 16);
  m.params().values()[0] = std::nan("");
  TrainOptions o;
  o.steps = 5;
  CHECK_THROWS_AS(train(m, random_examples(rng, 4, 3, 5), o, pad_of(c)), TrainingDivergedError);
}

TEST_CASE("memorises eight utterances and decodes them exactly") {
  std::mt19937_64 rng(17);
  Seq2SeqConfig c = config(4, 32, 2, 1, 12);
  Seq2SeqModel m(c, 18);
  const auto ex = random_examples(rng, 8, 4, 9, 10, 6);
  TrainOptions o;
  o.steps = 600;
  o.batch_size = 8;
  o.lr = 3e-3;
  const auto r = train(m, ex, o, pad_of(c));
  const double final_loss = nll_loss(m, make_batch(ex, c.sos, c.eos, pad_of(c))).mean();
  CHECK(final_loss < 0.1);
  CHECK(r.loss_curve.size() == 600);
  std::vector<PseudoTokenSequence> refs, hyps;
  for (const auto& e : ex) {
    refs.push_back(e.targets);
    refs.back().utterance_id = e.features.utterance_id;
    hyps.push_back(greedy_decode(m, e.features, 20));
    CHECK(hyps.back().symbols == e.targets.symbols);
    CHECK(beam_search(m, e.features, {10, 20, 0.0}).tokens.symbols == e.targets.symbols);
  }
  CHECK(error_rate(refs, hyps).rate() == 0.0);
}

TEST_CASE("smoothed loss curve is non-increasing on a synthetic pseudo-ASR task") {
  SynthOptions so;
  so.utterances = 60;
  so.states = 8;
  so.dim = 6;
  so.seed = 4;
  const auto synth = generate_synthetic(so);
  const auto run = pltest::induce(synth.features, 8, 10, 4);
  Seq2SeqConfig c = config(6, 16, 1, 1, run.bpe.vocab_size());
  c.sos = run.bpe.sos();
  c.eos = run.bpe.eos();
  Seq2SeqModel m(c, 5);
  TrainOptions o;
  o.steps = 500;
  o.lr = 3e-3;
  const auto r = train(m, pltest::pair_examples(synth.features, run.tokens), o, run.bpe.pad());
  std::vector<double> means;
  for (std::size_t s = 0; s + 50 <= r.loss_curve.size(); s += 50)
    means.push_back(std::accumulate(r.loss_curve.begin() + long(s), r.loss_curve.begin() + long(s + 50), 0.0) / 50);
  for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] <= means[i - 1]);
}

TEST_CASE("greedy decoding edge cases") {
  std::mt19937_64 rng(19);
  const auto f = pltest::random_features(rng, 4, 3);
  // Zero table: all logits tie, so argmax is id 0.
  Seq2SeqConfig c = config(3, 8, 1, 1, 6);
  c.sos = 1;
  c.eos = 0;
  Seq2SeqModel ends(c, 1);
  for (auto& x : ends.embedding()) x = 0.0;
  CHECK(greedy_decode(ends, f, 10).symbols.empty());

  c.eos = 5;
  Seq2SeqModel runs(c, 1);
  for (auto& x : runs.embedding()) x = 0.0;
  CHECK(greedy_decode(runs, f, 1).symbols == std::vector<Symbol>{0});
  CHECK(greedy_decode(runs, f, 4).symbols.size() == 4);
  CHECK_THROWS_AS(greedy_decode(runs, f, 0), ArgumentError);
}

TEST_CASE("beam search agrees with greedy at width one and never scores worse at ten") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 60; ++i) {
    const Seq2SeqModel m(config(3, 8, 1, 1, 6), 200 + i);
    const auto f = pltest::random_features(rng, 2 + rng() % 6, 3);
    const auto one = beam_search(m, f, {1, 6, 0.0});
    const auto ten = beam_search(m, f, {10, 6, 0.0});
    CHECK(one.tokens.symbols == greedy_decode(m, f, 6).symbols);
    CHECK(ten.score >= one.score - 1e-12);
  }
  CHECK_THROWS_AS(beam_search(Seq2SeqModel(config(3, 8, 1, 1, 6), 1),
                              pltest::random_features(rng, 3, 3), {0, 5, 0.0}),
                  ArgumentError);
}

TEST_CASE("length penalty divides the log-probability by length^alpha") {
  std::mt19937_64 rng(23);
  const Seq2SeqModel m(config(3, 8, 1, 1, 6), 24);
  const auto f = pltest::random_features(rng, 4, 3);
  const auto r = beam_search(m, f, {4, 5, 1.0});
  const double len = double(r.tokens.size() + (r.finished ? 1 : 0));
  CHECK(r.score == doctest::Approx(r.logprob / len));
}

TEST_CASE("embedding swap keeps every other weight") {
  Seq2SeqModel m(config(3, 8, 2, 1, 10), 25);
  const std::string sum = m.non_embedding_checksum();
  std::map<std::string, std::vector<double>> before;
  for (const auto& e : m.params().entries())
    before[e.name].assign(m.params().view(e.ref).begin(), m.params().view(e.ref).end());
  m.swap_embeddings(20, 17, 18, 3);
  CHECK(m.config().vocab == 20);
  CHECK(m.config().sos == 17);
  CHECK(m.embedding().size() == 20 * 8);
  CHECK(m.non_embedding_checksum() == sum);
  for (const auto& e : m.params().entries()) {
    if (e.name == "decoder.embedding") continue;
    const auto v = m.params().view(e.ref);
    CHECK(std::vector<double>(v.begin(), v.end()) == before.at(e.name));
  }
  m.params().values()[0] += 1.0;
  CHECK(m.non_embedding_checksum() != sum);
}

TEST_CASE("checkpoint roundtrip and corruption") {
  const Seq2SeqModel m(config(3, 8, 1, 2, 9, false), 26);
  std::stringstream ss;
  write_seq2seq(ss, m);
  const std::string bytes = ss.str();
  const auto back = read_seq2seq(ss);
  CHECK(back.config() == m.config());
  for (std::size_t i = 0; i < m.params().size(); ++i)
    CHECK(back.params().values()[i] == double(float(m.params().values()[i])));

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_seq2seq(truncated), Error);
  std::string wrong = bytes;
  wrong[0] = 'Q';
  std::istringstream bad_magic(wrong);
  CHECK_THROWS_AS(read_seq2seq(bad_magic), FormatError);
  std::istringstream trailing(bytes + "x");
  CHECK_THROWS_AS(read_seq2seq(trailing), CorruptionError);
}
