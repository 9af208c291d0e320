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

#include "pseudolang/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pseudolang/error.hpp"

namespace pseudolang::nn {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kInf = std::numeric_limits<double>::infinity();

// ---- layer norm -------------------------------------------------------------

Mat layer_norm(const ParamStore& store, const LayerNormRefs& ln, const Mat& x,
               LayerNormTrace& tr) {
  const auto gain = store.view(ln.gain);
  const auto bias = store.view(ln.bias);
  const std::size_t d = x.cols;
  Mat y(x.rows, d);
  tr.xhat = Mat(x.rows, d);
  tr.rstd.assign(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = x.row(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kNormEps);
    tr.rstd[i] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (r[j] - mu) * rstd;
      tr.xhat(i, j) = xh;
      y(i, j) = gain[j] * xh + bias[j];
    }
  }
  return y;
}

Mat layer_norm_backward(const ParamStore& store, const LayerNormRefs& ln,
                        const LayerNormTrace& tr, const Mat& dy,
                        std::span<double> grads) {
  const auto gain = store.view(ln.gain);
  double* dgain = grads.data() + ln.gain.offset;
  double* dbias = grads.data() + ln.bias.offset;
  const std::size_t d = dy.cols;
  Mat dx(dy.rows, d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = dy(i, j);
      dgain[j] += g * tr.xhat(i, j);
      dbias[j] += g;
      dxhat[j] = g * gain[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * tr.xhat(i, j);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx(i, j) = tr.rstd[i] *
                 (dxhat[j] - mean_dxhat - tr.xhat(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

// ---- attention ----------------------------------------------------------------

Mat matmul_nt(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
      c(i, j) = acc;
    }
  }
  return c;
}

Mat matmul_plain(const Mat& a, const Mat& b) { return matmul(a, b.v, b.cols); }

// a^T b
Mat matmul_tn(const Mat& a, const Mat& b) {
  Mat c(a.cols, b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double s = a(r, i);
      if (s == 0.0) continue;
      double* out = c.v.data() + i * c.cols;
      const double* in = b.v.data() + r * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) out[j] += s * in[j];
    }
  }
  return c;
}

void add_into(Mat& a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

Mat attention(const ParamStore& store, const AttentionRefs& at, const Mat& xq,
              const Mat& xkv, bool causal, AttentionTrace& tr) {
  tr.xq = xq;
  tr.xkv = xkv;
  tr.causal = causal;
  tr.q = linear(store, at.q, xq);
  tr.k = linear(store, at.k, xkv);
  tr.v = linear(store, at.v, xkv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(tr.q.cols));
  tr.probs = matmul_nt(tr.q, tr.k);
  for (std::size_t i = 0; i < tr.probs.rows; ++i) {
    auto r = tr.probs.row(i);
    double mx = -kInf;
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] = (causal && j > i) ? -kInf : r[j] * scale;
      mx = std::max(mx, r[j]);
    }
    double sum = 0.0;
    for (double& s : r) {
      s = s == -kInf ? 0.0 : std::exp(s - mx);
      sum += s;
    }
    for (double& s : r) s /= sum;
  }
  tr.ctx = matmul_plain(tr.probs, tr.v);
  return linear(store, at.o, tr.ctx);
}

// Returns {d xq, d xkv}.
std::pair<Mat, Mat> attention_backward(const ParamStore& store,
                                       const AttentionRefs& at,
                                       const AttentionTrace& tr, const Mat& dout,
                                       std::span<double> grads) {
  const Mat dctx = linear_backward(store, at.o, tr.ctx, dout, grads);
  const Mat dv = matmul_tn(tr.probs, dctx);
  Mat ds = matmul_nt(dctx, tr.v);  // dP
  const double scale = 1.0 / std::sqrt(static_cast<double>(tr.q.cols));
  for (std::size_t i = 0; i < ds.rows; ++i) {
    auto dp = ds.row(i);
    const auto p = tr.probs.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < dp.size(); ++j) dot += p[j] * dp[j];
    for (std::size_t j = 0; j < dp.size(); ++j) dp[j] = p[j] * (dp[j] - dot) * scale;
  }
  const Mat dq = matmul_plain(ds, tr.k);
  const Mat dk = matmul_tn(ds, tr.q);
  Mat dxq = linear_backward(store, at.q, tr.xq, dq, grads);
  Mat dxkv = linear_backward(store, at.k, tr.xkv, dk, grads);
  add_into(dxkv, linear_backward(store, at.v, tr.xkv, dv, grads));
  return {std::move(dxq), std::move(dxkv)};
}

// ---- feed-forward -----------------------------------------------------------

Mat feed_forward(const ParamStore& store, const FeedForwardRefs& ff, const Mat& x,
                 FeedForwardTrace& tr) {
  tr.x = x;
  tr.pre = linear(store, ff.in, x);
  tr.act = tr.pre;
  for (double& a : tr.act.v) a = gelu(a);
  return linear(store, ff.out, tr.act);
}

Mat feed_forward_backward(const ParamStore& store, const FeedForwardRefs& ff,
                          const FeedForwardTrace& tr, const Mat& dy,
                          std::span<double> grads) {
  Mat dact = linear_backward(store, ff.out, tr.act, dy, grads);
  for (std::size_t i = 0; i < dact.v.size(); ++i) dact.v[i] *= gelu_grad(tr.pre.v[i]);
  return linear_backward(store, ff.in, tr.x, dact, grads);
}

// ---- blocks -------------------------------------------------------------------

Mat block_forward(const ParamStore& store, const BlockRefs& b, Mat x,
                  const Mat* memory, BlockTrace& tr, const std::string& where) {
  {
    const Mat n = layer_norm(store, b.self_norm, x, tr.self_norm);
    const Mat a = attention(store, b.self_attn, n, n, b.causal, tr.self_attn);
    check_finite(a, where + " self-attention");
    add_into(x, a);
  }
  if (b.has_cross) {
    const Mat n = layer_norm(store, b.cross_norm, x, tr.cross_norm);
    const Mat c = attention(store, b.cross_attn, n, *memory, false, tr.cross_attn);
    check_finite(c, where + " cross-attention");
    add_into(x, c);
  }
  const Mat n = layer_norm(store, b.ff_norm, x, tr.ff_norm);
  const Mat f = feed_forward(store, b.ff, n, tr.ff);
  check_finite(f, where + " feed-forward");
  add_into(x, f);
  return x;
}

Mat block_backward(const ParamStore& store, const BlockRefs& b,
                   const BlockTrace& tr, const Mat& dy, std::span<double> grads,
                   Mat* d_memory) {
  Mat dx = dy;
  add_into(dx, layer_norm_backward(
                   store, b.ff_norm, tr.ff_norm,
                   feed_forward_backward(store, b.ff, tr.ff, dx, grads), grads));
  if (b.has_cross) {
    auto [dq, dmem] = attention_backward(store, b.cross_attn, tr.cross_attn, dx, grads);
    add_into(dx, layer_norm_backward(store, b.cross_norm, tr.cross_norm, dq, grads));
    if (d_memory) add_into(*d_memory, dmem);
  }
  auto [dq, dkv] = attention_backward(store, b.self_attn, tr.self_attn, dx, grads);
  add_into(dq, dkv);
  add_into(dx, layer_norm_backward(store, b.self_norm, tr.self_norm, dq, grads));
  return dx;
}

const Mat& run_blocks(const ParamStore& store, const StackLayout& layout, Mat x,
                      const Mat* memory, StackTrace& trace) {
  trace.blocks.resize(layout.blocks.size());
  for (std::size_t l = 0; l < layout.blocks.size(); ++l) {
    if (layout.blocks[l].has_cross && memory == nullptr) {
      throw ArgumentError(layout.name + ": cross-attention needs a memory");
    }
    x = block_forward(store, layout.blocks[l], std::move(x), memory,
                      trace.blocks[l],
                      layout.name + " block " + std::to_string(l));
  }
  trace.output = layer_norm(store, layout.final_norm, x, trace.final_norm);
  check_finite(trace.output, layout.name + " final norm");
  return trace.output;
}

LinearRefs add_linear(ParamStore& s, const std::string& name, std::size_t in,
                      std::size_t out) {
  return {s.add(name + ".w", in, out), s.add(name + ".b", 1, out)};
}

LayerNormRefs add_norm(ParamStore& s, const std::string& name, std::size_t d) {
  return {s.add(name + ".gain", 1, d), s.add(name + ".bias", 1, d)};
}

AttentionRefs add_attention(ParamStore& s, const std::string& name, std::size_t d) {
  return {add_linear(s, name + ".q", d, d), add_linear(s, name + ".k", d, d),
          add_linear(s, name + ".v", d, d), add_linear(s, name + ".o", d, d)};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void init_entry(ParamStore& store, const ParamStore::Entry& e, std::mt19937_64& rng) {
  auto w = store.view(e.ref);
  if (ends_with(e.name, ".gain")) {
    std::fill(w.begin(), w.end(), 1.0);
  } else if (ends_with(e.name, ".b") || ends_with(e.name, ".bias")) {
    std::fill(w.begin(), w.end(), 0.0);
  } else if (ends_with(e.name, "embedding") || ends_with(e.name, "output_projection")) {
    // vocab x d_model
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(e.ref.cols)));
    for (double& x : w) x = dist(rng);
  } else {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(e.ref.rows)));
    for (double& x : w) x = dist(rng);
  }
}

}  // namespace

ParamRef ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
  ParamRef ref{values_.size(), rows, cols};
  values_.resize(values_.size() + ref.size(), 0.0);
  entries_.push_back({std::move(name), ref});
  return ref;
}

std::optional<ParamRef> ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.ref;
  }
  return std::nullopt;
}

StackLayout register_stack(ParamStore& s, const std::string& name,
                           const StackShape& shape) {
  StackLayout layout;
  layout.name = name;
  layout.d_model = shape.d_model;
  layout.embeds_tokens = shape.embeds_tokens;
  if (shape.embeds_tokens) {
    layout.embedding = s.add(name + ".embedding", shape.input_dim, shape.d_model);
  } else {
    layout.input = add_linear(s, name + ".input", shape.input_dim, shape.d_model);
  }
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const std::string p = name + ".block" + std::to_string(l);
    BlockRefs b;
    b.causal = shape.causal;
    b.has_cross = shape.cross;
    b.self_norm = add_norm(s, p + ".self_norm", shape.d_model);
    b.self_attn = add_attention(s, p + ".self_attn", shape.d_model);
    if (shape.cross) {
      b.cross_norm = add_norm(s, p + ".cross_norm", shape.d_model);
      b.cross_attn = add_attention(s, p + ".cross_attn", shape.d_model);
    }
    b.ff_norm = add_norm(s, p + ".ff_norm", shape.d_model);
    b.ff.in = add_linear(s, p + ".ff.in", shape.d_model, shape.ff_dim);
    b.ff.out = add_linear(s, p + ".ff.out", shape.ff_dim, shape.d_model);
    layout.blocks.push_back(b);
  }
  layout.final_norm = add_norm(s, name + ".final_norm", shape.d_model);
  return layout;
}

void init_params(ParamStore& store, std::mt19937_64& rng) {
  for (const auto& e : store.entries()) init_entry(store, e, rng);
}

void init_range(ParamStore& store, const std::string& prefix, std::mt19937_64& rng) {
  for (const auto& e : store.entries()) {
    if (e.name.rfind(prefix, 0) == 0) init_entry(store, e, rng);
  }
}

const Mat& forward_frames(const ParamStore& store, const StackLayout& layout,
                          const Mat& frames, const Mat* memory, StackTrace& trace) {
  if (layout.embeds_tokens) throw ArgumentError(layout.name + " embeds tokens");
  if (frames.cols != layout.input.w.rows) {
    throw ArgumentError(layout.name + ": frame dim " + std::to_string(frames.cols) +
                        " != expected " + std::to_string(layout.input.w.rows));
  }
  trace.frames = frames;
  Mat x = linear(store, layout.input, frames);
  add_positions(x);
  check_finite(x, layout.name + " input projection");
  return run_blocks(store, layout, std::move(x), memory, trace);
}

const Mat& forward_tokens(const ParamStore& store, const StackLayout& layout,
                          std::span<const Symbol> tokens, const Mat* memory,
                          StackTrace& trace) {
  if (!layout.embeds_tokens) throw ArgumentError(layout.name + " takes frames");
  const auto table = store.view(layout.embedding);
  const std::size_t d = layout.d_model;
  const double scale = std::sqrt(static_cast<double>(d));
  trace.tokens.assign(tokens.begin(), tokens.end());
  Mat x(tokens.size(), d);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= layout.embedding.rows) {
      throw ArgumentError(layout.name + ": token id " + std::to_string(tokens[i]) +
                          " outside vocabulary");
    }
    for (std::size_t j = 0; j < d; ++j) x(i, j) = table[tokens[i] * d + j] * scale;
  }
  add_positions(x);
  return run_blocks(store, layout, std::move(x), memory, trace);
}

void backward_stack(const ParamStore& store, const StackLayout& layout,
                    const StackTrace& trace, const Mat& d_output,
                    std::span<double> grads, Mat* d_memory) {
  Mat dx = layer_norm_backward(store, layout.final_norm, trace.final_norm,
                               d_output, grads);
  for (std::size_t l = layout.blocks.size(); l-- > 0;) {
    dx = block_backward(store, layout.blocks[l], trace.blocks[l], dx, grads, d_memory);
  }
  if (layout.embeds_tokens) {
    const std::size_t d = layout.d_model;
    const double scale = std::sqrt(static_cast<double>(d));
    double* g = grads.data() + layout.embedding.offset;
    for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) g[trace.tokens[i] * d + j] += dx(i, j) * scale;
    }
  } else {
    linear_backward(store, layout.input, trace.frames, dx, grads, false);
  }
}

Mat matmul(const Mat& a, std::span<const double> b, std::size_t b_cols) {
  Mat c(a.rows, b_cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* out = c.v.data() + i * b_cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const double* in = b.data() + k * b_cols;
      for (std::size_t j = 0; j < b_cols; ++j) out[j] += s * in[j];
    }
  }
  return c;
}

Mat linear(const ParamStore& store, const LinearRefs& l, const Mat& x) {
  Mat y = matmul(x, store.view(l.w), l.w.cols);
  const auto b = store.view(l.b);
  for (std::size_t i = 0; i < y.rows; ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return y;
}

Mat linear_backward(const ParamStore& store, const LinearRefs& l, const Mat& x,
                    const Mat& dy, std::span<double> grads, bool need_dx) {
  const std::size_t in = l.w.rows, out = l.w.cols;
  double* dw = grads.data() + l.w.offset;
  double* db = grads.data() + l.b.offset;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* g = dy.v.data() + r * out;
    for (std::size_t j = 0; j < out; ++j) db[j] += g[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double s = x(r, i);
      if (s == 0.0) continue;
      double* row = dw + i * out;
      for (std::size_t j = 0; j < out; ++j) row[j] += s * g[j];
    }
  }
  if (!need_dx) return {};
  const auto w = store.view(l.w);
  Mat dx(dy.rows, in);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const double* g = dy.v.data() + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = w.data() + i * out;
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) acc += wr[j] * g[j];
      dx(r, i) = acc;
    }
  }
  return dx;
}

// tanh approximation
double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void add_positions(Mat& x) {
  const std::size_t d = x.cols;
  for (std::size_t p = 0; p < x.rows; ++p) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      x(p, i) += std::sin(static_cast<double>(p) * freq);
      if (i + 1 < d) x(p, i + 1) += std::cos(static_cast<double>(p) * freq);
    }
  }
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto r = logits.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double v : r) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < r.size(); ++j) out(i, j) = r[j] - lse;
  }
  return out;
}

void check_finite(const Mat& m, const std::string& where) {
  for (double v : m.v) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation in " + where);
  }
}

Adam::Adam(std::size_t n, AdamOptions opts) : opts_(opts), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grads[i];
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
  }
}

double scheduled_lr(double peak, std::size_t step, std::size_t total,
                    double warmup_frac) {
  const double warmup = std::max(1.0, std::floor(warmup_frac * static_cast<double>(total)));
  const double s = static_cast<double>(step) + 1.0;
  if (s <= warmup) return peak * s / warmup;
  const double span = std::max(1.0, static_cast<double>(total) - warmup);
  const double frac = std::min(1.0, (s - warmup) / span);
  return peak * (1.0 - 0.9 * frac);
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

}  // namespace pseudolang::nn
