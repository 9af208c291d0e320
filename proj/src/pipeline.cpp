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

#include "pseudolang/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pseudolang/bpe.hpp"
#include "pseudolang/checkpoint.hpp"
#include "pseudolang/clustering.hpp"
#include "pseudolang/error.hpp"
#include "pseudolang/eval.hpp"
#include "pseudolang/features.hpp"
#include "pseudolang/pseudo_lang.hpp"
#include "pseudolang/seq2seq.hpp"
#include "pseudolang/synth.hpp"
#include "pseudolang/transducer.hpp"

namespace pseudolang::cli {

namespace fs = std::filesystem;

const std::vector<ProfilePreset>& profile_presets() {
  static const std::vector<ProfilePreset> presets = {
      {"base", 500, 30000, 64, 128, 2, 2},
      {"tiny", 500, 10000, 32, 64, 2, 1},
      {"transducer", 25, 1000, 32, 64, 2, 1},
  };
  return presets;
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"work_dir", "directory holding every artifact"},
      {"feature_root", "input feature corpus (default: synthetic corpus in work_dir)"},
      {"profile", "preset: base, tiny or transducer"},
      {"kernel", "average-pooling window in frames"},
      {"clusters", "k-means cluster count"},
      {"vocab", "BPE vocabulary size including the three specials"},
      {"standardize", "per-utterance mean/variance normalisation before pooling"},
      {"seed", "global random seed"},
      {"kmeans_batch", "mini-batch size"},
      {"kmeans_epochs", "passes over the pooled frames"},
      {"kmeans_init_size", "rows sampled for k-means++ seeding"},
      {"d_model", "model width"},
      {"ff_dim", "feed-forward width"},
      {"encoder_layers", "encoder blocks"},
      {"decoder_layers", "decoder (or label network) blocks"},
      {"joint_dim", "transducer joint width"},
      {"tie_embeddings", "share decoder input embedding and output projection"},
      {"steps", "optimizer updates"},
      {"batch", "utterances per update"},
      {"lr", "peak learning rate"},
      {"warmup", "fraction of steps spent warming up"},
      {"optimizer", "adam or momentum"},
      {"clip", "gradient norm clip (0 disables)"},
      {"model", "model decoded and scored: seq2seq or transducer"},
      {"beam", "beam width (1 is greedy)"},
      {"max_len", "maximum decoded tokens"},
      {"length_penalty", "beam score exponent on length"},
      {"max_symbols_per_frame", "transducer emissions per frame"},
      {"with_transducer", "pipeline also trains, decodes and scores the transducer"},
      {"synth_utterances", "synthetic corpus size"},
      {"synth_states", "latent states"},
      {"synth_dim", "feature dimension"},
      {"synth_min_segments", "segments per utterance, lower bound"},
      {"synth_max_segments", "segments per utterance, upper bound"},
      {"synth_min_dwell", "minimum frames per segment"},
      {"synth_dwell_mean", "mean frames per segment"},
      {"synth_noise", "emission standard deviation"},
      {"synth_spread", "standard deviation of state means"},
      {"synth_branching", "successor states per state"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty())
    throw ArgumentError(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
  return static_cast<std::size_t>(out);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ArgumentError(fmt::format("{}: expected a number, got '{}'", key, v));
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ArgumentError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

void apply_preset(PipelineConfig& c, const std::string& name) {
  for (const auto& p : profile_presets()) {
    if (p.name != name) continue;
    c.profile = p.name;
    c.clusters = p.clusters;
    c.vocab = p.vocab;
    c.d_model = p.d_model;
    c.ff_dim = p.ff_dim;
    c.encoder_layers = p.encoder_layers;
    c.decoder_layers = p.decoder_layers;
    if (name == "transducer") {
      c.model = "transducer";
      c.with_transducer = true;
    }
    return;
  }
  throw ArgumentError(fmt::format("unknown profile '{}'", name));
}

void apply_key(PipelineConfig& c, const std::string& key, const std::string& v) {
  using Setter = std::function<void(PipelineConfig&, const std::string&)>;
  static const std::unordered_map<std::string, Setter> setters = [] {
    std::unordered_map<std::string, Setter> m;
    auto size = [&m](const char* k, std::size_t PipelineConfig::*f) {
      m[k] = [k, f](PipelineConfig& c, const std::string& v) { c.*f = parse_size(k, v); };
    };
    auto real = [&m](const char* k, double PipelineConfig::*f) {
      m[k] = [k, f](PipelineConfig& c, const std::string& v) { c.*f = parse_double(k, v); };
    };
    auto flag = [&m](const char* k, bool PipelineConfig::*f) {
      m[k] = [k, f](PipelineConfig& c, const std::string& v) { c.*f = parse_bool(k, v); };
    };
    m["work_dir"] = [](PipelineConfig& c, const std::string& v) { c.work_dir = v; };
    m["feature_root"] = [](PipelineConfig& c, const std::string& v) { c.feature_root = v; };
    m["profile"] = [](PipelineConfig& c, const std::string& v) { apply_preset(c, v); };
    m["seed"] = [](PipelineConfig& c, const std::string& v) { c.seed = parse_size("seed", v); };
    m["optimizer"] = [](PipelineConfig& c, const std::string& v) {
      if (v != "adam" && v != "momentum")
        throw ArgumentError(fmt::format("optimizer: expected adam or momentum, got '{}'", v));
      c.optimizer = v;
    };
    m["model"] = [](PipelineConfig& c, const std::string& v) {
      if (v != "seq2seq" && v != "transducer")
        throw ArgumentError(fmt::format("model: expected seq2seq or transducer, got '{}'", v));
      c.model = v;
    };
    size("kernel", &PipelineConfig::kernel);
    size("clusters", &PipelineConfig::clusters);
    size("vocab", &PipelineConfig::vocab);
    flag("standardize", &PipelineConfig::standardize);
    size("kmeans_batch", &PipelineConfig::kmeans_batch);
    size("kmeans_epochs", &PipelineConfig::kmeans_epochs);
    size("kmeans_init_size", &PipelineConfig::kmeans_init_size);
    size("d_model", &PipelineConfig::d_model);
    size("ff_dim", &PipelineConfig::ff_dim);
    size("encoder_layers", &PipelineConfig::encoder_layers);
    size("decoder_layers", &PipelineConfig::decoder_layers);
    size("joint_dim", &PipelineConfig::joint_dim);
    flag("tie_embeddings", &PipelineConfig::tie_embeddings);
    size("steps", &PipelineConfig::steps);
    size("batch", &PipelineConfig::batch);
    real("lr", &PipelineConfig::lr);
    real("warmup", &PipelineConfig::warmup);
    real("clip", &PipelineConfig::clip);
    size("beam", &PipelineConfig::beam);
    size("max_len", &PipelineConfig::max_len);
    real("length_penalty", &PipelineConfig::length_penalty);
    size("max_symbols_per_frame", &PipelineConfig::max_symbols_per_frame);
    flag("with_transducer", &PipelineConfig::with_transducer);
    size("synth_utterances", &PipelineConfig::synth_utterances);
    size("synth_states", &PipelineConfig::synth_states);
    size("synth_dim", &PipelineConfig::synth_dim);
    size("synth_min_segments", &PipelineConfig::synth_min_segments);
    size("synth_max_segments", &PipelineConfig::synth_max_segments);
    size("synth_min_dwell", &PipelineConfig::synth_min_dwell);
    real("synth_dwell_mean", &PipelineConfig::synth_dwell_mean);
    real("synth_noise", &PipelineConfig::synth_noise);
    real("synth_spread", &PipelineConfig::synth_spread);
    size("synth_branching", &PipelineConfig::synth_branching);
    return m;
  }();
  const auto it = setters.find(key);
  if (it == setters.end()) throw ArgumentError(fmt::format("unknown config key '{}'", key));
  it->second(c, v);
}

void validate(const PipelineConfig& c) {
  auto positive = [](const char* k, double v) {
    if (!(v > 0)) throw ArgumentError(fmt::format("{} must be positive", k));
  };
  positive("kernel", static_cast<double>(c.kernel));
  positive("clusters", static_cast<double>(c.clusters));
  positive("kmeans_batch", static_cast<double>(c.kmeans_batch));
  positive("kmeans_epochs", static_cast<double>(c.kmeans_epochs));
  positive("d_model", static_cast<double>(c.d_model));
  positive("ff_dim", static_cast<double>(c.ff_dim));
  positive("joint_dim", static_cast<double>(c.joint_dim));
  positive("batch", static_cast<double>(c.batch));
  positive("beam", static_cast<double>(c.beam));
  positive("max_len", static_cast<double>(c.max_len));
  positive("synth_dim", static_cast<double>(c.synth_dim));
  if (c.vocab < c.clusters + 3)
    throw ArgumentError(fmt::format(
        "vocab ({}) must cover the {} cluster ids plus the 3 special tokens", c.vocab,
        c.clusters));
  if (c.lr < 0) throw ArgumentError("lr must be non-negative");
  if (c.warmup < 0 || c.warmup > 1) throw ArgumentError("warmup must lie in [0, 1]");
  if (c.clip < 0) throw ArgumentError("clip must be non-negative");
  if (c.length_penalty < 0) throw ArgumentError("length_penalty must be non-negative");
}

}  // namespace

KeyValues parse_config_text(const std::string& text) {
  KeyValues out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ArgumentError(fmt::format("config line {}: expected key = value", lineno));
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key.empty()) throw ArgumentError(fmt::format("config line {}: empty key", lineno));
    out[key] = value;
  }
  return out;
}

PipelineConfig resolve_config(const KeyValues& file, const KeyValues& flags) {
  PipelineConfig c;
  // The profile is applied first so explicit keys override preset values.
  std::string profile = "base";
  if (auto it = file.find("profile"); it != file.end()) profile = it->second;
  if (auto it = flags.find("profile"); it != flags.end()) profile = it->second;
  apply_preset(c, profile);
  for (const auto* kv : {&file, &flags})
    for (const auto& [k, v] : *kv)
      if (k != "profile") apply_key(c, k, v);
  validate(c);
  return c;
}

WorkDirLock::WorkDirLock(const fs::path& work_dir) : path_(work_dir / ".lock") {
  fs::create_directories(work_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw StageError(fmt::format(
        "work directory {} is locked by another run (remove {} if no run is active)",
        work_dir.string(), path_.string()));
  const std::string pid = fmt::format("{}\n", ::getpid());
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

WorkDirLock::~WorkDirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

// ---------------------------------------------------------------------------
// Artifacts and completion markers

struct Artifact {
  std::string name;      // key recorded in markers
  fs::path path;
  bool corpus = false;   // a feature corpus directory
  std::string producer;  // stage that writes it; empty for external inputs
};

std::string file_sha(const fs::path& p) {
  return checkpoint::sha256_hex(detail::read_text_file(p));
}

// Manifest plus every feature file, in manifest order.
std::string corpus_sha(const fs::path& root) {
  const FeatureCorpus corpus = read_corpus(root);
  std::string acc = detail::read_text_file(root / "manifest.tsv");
  for (const auto& e : corpus.manifest) acc += file_sha(root / e.path);
  return checkpoint::sha256_hex(acc);
}

std::string artifact_sha(const Artifact& a) {
  return a.corpus ? corpus_sha(a.path) : file_sha(a.path);
}

bool artifact_exists(const Artifact& a) {
  return a.corpus ? fs::exists(a.path / "manifest.tsv") : fs::is_regular_file(a.path);
}

struct Marker {
  std::string stage;
  std::uint64_t seed = 0;
  std::string params;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;

  std::string serialize() const {
    std::string s = fmt::format("stage={}\nseed={}\nparams={}\n", stage, seed, params);
    for (const auto& [k, v] : inputs) s += fmt::format("input {} {}\n", k, v);
    for (const auto& [k, v] : outputs) s += fmt::format("output {} {}\n", k, v);
    return s;
  }

  std::optional<std::string> output_sha(const std::string& name) const {
    for (const auto& [k, v] : outputs)
      if (k == name) return v;
    return std::nullopt;
  }
};

fs::path marker_path(const PipelineConfig& c, const std::string& stage) {
  return c.work_dir / "markers" / (stage + ".done");
}

std::optional<Marker> load_marker(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  std::istringstream is(detail::read_text_file(p));
  Marker m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("stage=", 0) == 0) {
      m.stage = line.substr(6);
    } else if (line.rfind("seed=", 0) == 0) {
      m.seed = std::strtoull(line.c_str() + 5, nullptr, 10);
    } else if (line.rfind("params=", 0) == 0) {
      m.params = line.substr(7);
    } else {
      std::istringstream ls(line);
      std::string kind, name, sha;
      if (!(ls >> kind >> name >> sha)) continue;
      (kind == "input" ? m.inputs : m.outputs).emplace_back(name, sha);
    }
  }
  return m;
}

StageResult run_stage(const PipelineConfig& cfg, const std::string& stage,
                      const std::string& params, const std::vector<Artifact>& inputs,
                      const std::vector<Artifact>& outputs,
                      const std::function<void()>& body) {
  Marker want{stage, cfg.seed, params, {}, {}};
  for (const auto& in : inputs) {
    if (!artifact_exists(in)) {
      if (in.producer.empty())
        throw StageError(fmt::format("{}: input {} not found at {}", stage, in.name,
                                     in.path.string()));
      throw StageError(fmt::format("{}: missing {} (written by stage '{}'); run `pseudolang {}` first",
                                   stage, in.name, in.producer, in.producer));
    }
    const std::string sha = artifact_sha(in);
    if (!in.producer.empty()) {
      const auto upstream = load_marker(marker_path(cfg, in.producer));
      const auto recorded = upstream ? upstream->output_sha(in.name) : std::nullopt;
      if (!recorded)
        throw StageError(fmt::format(
            "{}: {} has no completion record from stage '{}'; rerun `pseudolang {}`", stage,
            in.name, in.producer, in.producer));
      if (*recorded != sha)
        throw StageError(fmt::format(
            "{}: stale {}: it changed after stage '{}' wrote it; rerun `pseudolang {}`", stage,
            in.name, in.producer, in.producer));
    }
    want.inputs.emplace_back(in.name, sha);
  }

  const fs::path mpath = marker_path(cfg, stage);
  if (const auto have = load_marker(mpath);
      have && have->stage == want.stage && have->seed == want.seed &&
      have->params == want.params && have->inputs == want.inputs) {
    bool intact = true;
    for (const auto& out : outputs) {
      const auto rec = have->output_sha(out.name);
      if (!rec || !artifact_exists(out) || artifact_sha(out) != *rec) {
        intact = false;
        break;
      }
    }
    if (intact) {
      spdlog::info("{}: up to date, skipping", stage);
      return {stage, StageStatus::kSkipped};
    }
  }

  spdlog::info("{}: running", stage);
  std::error_code ec;
  fs::remove(mpath, ec);
  body();
  for (const auto& out : outputs) {
    if (!artifact_exists(out))
      throw StageError(fmt::format("{}: did not produce {}", stage, out.name));
    want.outputs.emplace_back(out.name, artifact_sha(out));
  }
  fs::create_directories(mpath.parent_path());
  detail::write_text_file(mpath, want.serialize());
  return {stage, StageStatus::kRan};
}

// ---------------------------------------------------------------------------
// Work directory layout

struct Layout {
  explicit Layout(const PipelineConfig& c) : w(c.work_dir) {
    if (c.feature_root.empty())
      features = {"synth", w / "synth", true, "gen-synth"};
    else
      features = {"features", c.feature_root, true, ""};
  }
  fs::path w;
  Artifact features;
  Artifact synth() const { return {"synth", w / "synth", true, "gen-synth"}; }
  Artifact latent() const { return {"latent.txt", w / "synth" / "latent.txt", false, "gen-synth"}; }
  Artifact pooled() const { return {"pooled", w / "pooled", true, "pool"}; }
  Artifact kmeans() const { return {"kmeans.plkm", w / "kmeans.plkm", false, "kmeans-train"}; }
  Artifact units() const { return {"units.txt", w / "units.txt", false, "kmeans-apply"}; }
  Artifact chars() const { return {"chars.txt", w / "chars.txt", false, "dedup"}; }
  Artifact bpe() const { return {"bpe.model", w / "bpe.model", false, "bpe-train"}; }
  Artifact tokens() const { return {"tokens.txt", w / "tokens.txt", false, "tokenize"}; }
  Artifact stats() const { return {"stats.txt", w / "stats.txt", false, "stats"}; }
  Artifact seq2seq() const { return {"seq2seq.pls2", w / "seq2seq.pls2", false, "pretrain"}; }
  Artifact seq2seq_loss() const {
    return {"seq2seq_loss.csv", w / "seq2seq_loss.csv", false, "pretrain"};
  }
  Artifact transducer() const {
    return {"transducer.pls2", w / "transducer.pls2", false, "pretrain-transducer"};
  }
  Artifact transducer_loss() const {
    return {"transducer_loss.csv", w / "transducer_loss.csv", false, "pretrain-transducer"};
  }
  Artifact hyp(const std::string& model) const {
    return {fmt::format("hyp_{}.txt", model), w / fmt::format("hyp_{}.txt", model), false,
            fmt::format("decode-{}", model)};
  }
  Artifact score(const std::string& model) const {
    return {fmt::format("score_{}.txt", model), w / fmt::format("score_{}.txt", model), false,
            fmt::format("score-{}", model)};
  }
  Artifact score_utts(const std::string& model) const {
    return {fmt::format("score_{}_utts.tsv", model),
            w / fmt::format("score_{}_utts.tsv", model), false, fmt::format("score-{}", model)};
  }
};

std::string model_params(const PipelineConfig& c) {
  return fmt::format(
      "d_model={};ff_dim={};encoder_layers={};decoder_layers={};joint_dim={};tie={};"
      "steps={};batch={};lr={};warmup={};optimizer={};clip={}",
      c.d_model, c.ff_dim, c.encoder_layers, c.decoder_layers, c.joint_dim, c.tie_embeddings,
      c.steps, c.batch, c.lr, c.warmup, c.optimizer, c.clip);
}

TrainOptions train_options(const PipelineConfig& c) {
  TrainOptions o;
  o.steps = c.steps;
  o.batch_size = c.batch;
  o.lr = c.lr;
  o.warmup_frac = c.warmup;
  o.clip_norm = c.clip;
  o.optimizer = c.optimizer == "momentum" ? OptimizerKind::kMomentum : OptimizerKind::kAdam;
  o.seed = c.seed;
  return o;
}

// Pairs every feature utterance with its token sequence by id.
std::vector<TrainExample> load_examples(const Layout& L) {
  const FeatureCorpus corpus = read_corpus(L.features.path);
  auto tokens = read_sequences<TokenTag>(L.tokens().path);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < tokens.size(); ++i) by_id.emplace(tokens[i].utterance_id, i);
  std::vector<TrainExample> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto it = by_id.find(corpus.manifest[i].utterance_id);
    if (it == by_id.end())
      throw StageError(fmt::format("no token sequence for utterance {}",
                                   corpus.manifest[i].utterance_id));
    out.push_back({corpus.load(i), tokens[it->second]});
  }
  return out;
}

void write_loss(const fs::path& p, const TrainResult& r) {
  detail::write_text_file(p, format_loss_curve(r));
}

StepCallback progress(const char* what, std::size_t total) {
  const std::size_t every = std::max<std::size_t>(1, total / 10);
  return [what, total, every](std::size_t step, double loss) {
    if ((step + 1) % every == 0 || step + 1 == total)
      spdlog::info("{}: step {}/{} loss {:.4f}", what, step + 1, total, loss);
  };
}

StageResult decode_model(const PipelineConfig& cfg, const std::string& model) {
  const Layout L(cfg);
  const bool td = model == "transducer";
  const Artifact ckpt = td ? L.transducer() : L.seq2seq();
  const std::string params =
      td ? fmt::format("max_symbols_per_frame={}", cfg.max_symbols_per_frame)
         : fmt::format("beam={};max_len={};length_penalty={}", cfg.beam, cfg.max_len,
                       cfg.length_penalty);
  return run_stage(cfg, "decode-" + model, params, {L.features, ckpt}, {L.hyp(model)}, [&] {
    const FeatureCorpus corpus = read_corpus(L.features.path);
    SequenceCorpus<TokenTag> hyps;
    hyps.reserve(corpus.size());
    if (td) {
      const TransducerModel m = read_transducer(ckpt.path);
      for (std::size_t i = 0; i < corpus.size(); ++i)
        hyps.push_back(transducer_decode_greedy(m, corpus.load(i), cfg.max_symbols_per_frame));
    } else {
      const Seq2SeqModel m = read_seq2seq(ckpt.path);
      const BeamOptions bo{cfg.beam, cfg.max_len, cfg.length_penalty};
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        const FeatureSequence f = corpus.load(i);
        hyps.push_back(beam_search(m, f, bo).tokens);
      }
    }
    write_sequences<TokenTag>(L.hyp(model).path, hyps);
  });
}

StageResult score_model(const PipelineConfig& cfg, const std::string& model) {
  const Layout L(cfg);
  return run_stage(cfg, "score-" + model, "", {L.tokens(), L.hyp(model)},
                   {L.score(model), L.score_utts(model)}, [&] {
                     const auto refs = read_sequences<TokenTag>(L.tokens().path);
                     const auto hyps = read_sequences<TokenTag>(L.hyp(model).path);
                     const ErrorRateReport r = error_rate(refs, hyps);
                     detail::write_text_file(L.score(model).path, format_error_report(r));
                     detail::write_text_file(L.score_utts(model).path,
                                             format_utterance_scores(r));
                     spdlog::info("score-{}: error rate {:.4f} over {} reference tokens", model,
                                  r.rate(), r.reference_len);
                   });
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

StageResult cmd_gen_synth(const PipelineConfig& cfg) {
  const Layout L(cfg);
  SynthOptions o;
  o.utterances = cfg.synth_utterances;
  o.states = cfg.synth_states;
  o.dim = cfg.synth_dim;
  o.min_segments = cfg.synth_min_segments;
  o.max_segments = cfg.synth_max_segments;
  o.min_dwell = cfg.synth_min_dwell;
  o.dwell_mean = cfg.synth_dwell_mean;
  o.noise = cfg.synth_noise;
  o.spread = cfg.synth_spread;
  o.branching = cfg.synth_branching;
  o.seed = cfg.seed;
  const std::string params = fmt::format(
      "utterances={};states={};dim={};segments={}-{};min_dwell={};dwell_mean={};noise={};"
      "spread={};branching={}",
      o.utterances, o.states, o.dim, o.min_segments, o.max_segments, o.min_dwell, o.dwell_mean,
      o.noise, o.spread, o.branching);
  return run_stage(cfg, "gen-synth", params, {}, {L.synth(), L.latent()}, [&] {
    const SynthCorpus s = generate_synthetic(o);
    std::error_code ec;
    fs::remove_all(L.synth().path, ec);
    write_corpus(L.synth().path, s.features);
    std::ostringstream os;
    write_sequences(os, s.latent);
    detail::write_text_file(L.latent().path, os.str());
  });
}

StageResult cmd_pool(const PipelineConfig& cfg) {
  const Layout L(cfg);
  const std::string params = fmt::format("kernel={};standardize={}", cfg.kernel, cfg.standardize);
  return run_stage(cfg, "pool", params, {L.features}, {L.pooled()}, [&] {
    const FeatureCorpus in = read_corpus(L.features.path);
    std::vector<FeatureSequence> pooled;
    pooled.reserve(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      FeatureSequence f = in.load(i);
      if (cfg.standardize) f = standardize(f);
      pooled.push_back(average_pool(f, cfg.kernel));
    }
    std::error_code ec;
    fs::remove_all(L.pooled().path, ec);
    write_corpus(L.pooled().path, pooled);
  });
}

StageResult cmd_kmeans_train(const PipelineConfig& cfg) {
  const Layout L(cfg);
  const std::string params =
      fmt::format("clusters={};batch={};epochs={};init_size={}", cfg.clusters, cfg.kmeans_batch,
                  cfg.kmeans_epochs, cfg.kmeans_init_size);
  return run_stage(cfg, "kmeans-train", params, {L.pooled()}, {L.kmeans()}, [&] {
    const auto seqs = read_corpus(L.pooled().path).load_all();
    const FrameMatrix data = FrameMatrix::stack(seqs);
    MiniBatchOptions o;
    o.clusters = cfg.clusters;
    o.batch_size = std::min(cfg.kmeans_batch, data.rows());
    o.iterations = cfg.kmeans_epochs * ((data.rows() + o.batch_size - 1) / std::max<std::size_t>(o.batch_size, 1));
    o.seed = cfg.seed;
    o.init_size = cfg.kmeans_init_size;
    const KMeansModel m = minibatch_fit(data, o);
    spdlog::info("kmeans-train: {} frames, {} clusters, inertia {:.6g}", data.rows(),
                 m.clusters(), inertia(m, data));
    write_kmeans(L.kmeans().path, m);
  });
}

StageResult cmd_kmeans_apply(const PipelineConfig& cfg) {
  const Layout L(cfg);
  return run_stage(cfg, "kmeans-apply", "", {L.pooled(), L.kmeans()}, {L.units()}, [&] {
    const FeatureCorpus pooled = read_corpus(L.pooled().path);
    const KMeansModel m = read_kmeans(L.kmeans().path);
    SequenceCorpus<UnitTag> units;
    units.reserve(pooled.size());
    for (std::size_t i = 0; i < pooled.size(); ++i) units.push_back(predict(m, pooled.load(i)));
    write_sequences<UnitTag>(L.units().path, units);
  });
}

StageResult cmd_dedup(const PipelineConfig& cfg) {
  const Layout L(cfg);
  return run_stage(cfg, "dedup", "", {L.units()}, {L.chars()}, [&] {
    SequenceCorpus<CharTag> chars;
    for (const auto& u : read_sequences<UnitTag>(L.units().path)) chars.push_back(deduplicate(u));
    write_sequences<CharTag>(L.chars().path, chars);
  });
}

StageResult cmd_bpe_train(const PipelineConfig& cfg) {
  const Layout L(cfg);
  const std::string params = fmt::format("alphabet={};vocab={}", cfg.clusters, cfg.vocab);
  return run_stage(cfg, "bpe-train", params, {L.chars()}, {L.bpe()}, [&] {
    const auto chars = read_sequences<CharTag>(L.chars().path);
    const BpeModel m = bpe_train(chars, cfg.clusters, cfg.vocab);
    if (m.vocab_size() < cfg.vocab)
      spdlog::warn("bpe-train: no pair occurs twice after {} merges; vocabulary is {} not {}",
                   m.merges().size(), m.vocab_size(), cfg.vocab);
    write_bpe(L.bpe().path, m);
  });
}

StageResult cmd_tokenize(const PipelineConfig& cfg) {
  const Layout L(cfg);
  return run_stage(cfg, "tokenize", "", {L.chars(), L.bpe()}, {L.tokens()}, [&] {
    const BpeModel m = read_bpe(L.bpe().path);
    SequenceCorpus<TokenTag> tokens;
    for (const auto& c : read_sequences<CharTag>(L.chars().path)) tokens.push_back(m.encode(c));
    write_sequences<TokenTag>(L.tokens().path, tokens);
  });
}

StageResult cmd_stats(const PipelineConfig& cfg) {
  const Layout L(cfg);
  return run_stage(cfg, "stats", "", {L.units(), L.chars(), L.tokens()}, {L.stats()}, [&] {
    const auto units = read_sequences<UnitTag>(L.units().path);
    const auto chars = read_sequences<CharTag>(L.chars().path);
    const auto tokens = read_sequences<TokenTag>(L.tokens().path);
    const CompressionReport r = compression_report(units, chars, tokens);
    detail::write_text_file(L.stats().path, format_report(r));
    spdlog::info("stats: dedup ratio {:.4f}, subword ratio {:.4f}", r.dedup_ratio(),
                 r.subword_ratio());
  });
}

StageResult cmd_pretrain(const PipelineConfig& cfg) {
  const Layout L(cfg);
  return run_stage(
      cfg, "pretrain", model_params(cfg), {L.features, L.tokens(), L.bpe()},
      {L.seq2seq(), L.seq2seq_loss()}, [&] {
        const BpeModel bpe = read_bpe(L.bpe().path);
        const auto examples = load_examples(L);
        if (examples.empty()) throw DegenerateInputError("pretrain: empty corpus");
        Seq2SeqConfig mc;
        mc.input_dim = examples.front().features.dim;
        mc.d_model = cfg.d_model;
        mc.ff_dim = cfg.ff_dim;
        mc.encoder_layers = cfg.encoder_layers;
        mc.decoder_layers = cfg.decoder_layers;
        mc.vocab = bpe.vocab_size();
        mc.tie_embeddings = cfg.tie_embeddings;
        mc.sos = bpe.sos();
        mc.eos = bpe.eos();
        Seq2SeqModel model(mc, cfg.seed);
        const TrainResult r = train(model, examples, train_options(cfg), bpe.pad(),
                                    progress("pretrain", cfg.steps));
        write_seq2seq(L.seq2seq().path, model);
        write_loss(L.seq2seq_loss().path, r);
      });
}

StageResult cmd_pretrain_transducer(const PipelineConfig& cfg) {
  const Layout L(cfg);
  return run_stage(
      cfg, "pretrain-transducer", model_params(cfg), {L.features, L.tokens(), L.bpe()},
      {L.transducer(), L.transducer_loss()}, [&] {
        const BpeModel bpe = read_bpe(L.bpe().path);
        const auto examples = load_examples(L);
        if (examples.empty()) throw DegenerateInputError("pretrain-transducer: empty corpus");
        TransducerConfig mc;
        mc.input_dim = examples.front().features.dim;
        mc.d_model = cfg.d_model;
        mc.ff_dim = cfg.ff_dim;
        mc.encoder_layers = cfg.encoder_layers;
        mc.predictor_layers = cfg.decoder_layers;
        mc.joint_dim = cfg.joint_dim;
        mc.vocab = bpe.vocab_size();
        mc.sos = bpe.sos();
        TransducerModel model(mc, cfg.seed);
        const TrainResult r = train_transducer(model, examples, train_options(cfg), bpe.eos(),
                                               bpe.pad(), progress("pretrain-transducer", cfg.steps));
        write_transducer(L.transducer().path, model);
        write_loss(L.transducer_loss().path, r);
      });
}

StageResult cmd_decode(const PipelineConfig& cfg) { return decode_model(cfg, cfg.model); }

StageResult cmd_score(const PipelineConfig& cfg) { return score_model(cfg, cfg.model); }

std::vector<StageResult> cmd_pipeline(const PipelineConfig& cfg) {
  std::vector<StageResult> out;
  if (cfg.feature_root.empty()) out.push_back(cmd_gen_synth(cfg));
  out.push_back(cmd_pool(cfg));
  out.push_back(cmd_kmeans_train(cfg));
  out.push_back(cmd_kmeans_apply(cfg));
  out.push_back(cmd_dedup(cfg));
  out.push_back(cmd_bpe_train(cfg));
  out.push_back(cmd_tokenize(cfg));
  out.push_back(cmd_stats(cfg));
  const bool seq2seq = cfg.model == "seq2seq" || !cfg.with_transducer;
  if (seq2seq) {
    out.push_back(cmd_pretrain(cfg));
    out.push_back(decode_model(cfg, "seq2seq"));
    out.push_back(score_model(cfg, "seq2seq"));
  }
  if (cfg.with_transducer || cfg.model == "transducer") {
    out.push_back(cmd_pretrain_transducer(cfg));
    out.push_back(decode_model(cfg, "transducer"));
    out.push_back(score_model(cfg, "transducer"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Command line

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"pseudolang: pseudo-language induction and speech pre-training"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  bool quiet = false;
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_flag("-q,--quiet", quiet, "log warnings and errors only");

  KeyValues flags;
  std::vector<std::string> raw(config_keys().size());
  for (std::size_t i = 0; i < config_keys().size(); ++i) {
    const auto& [key, help] = config_keys()[i];
    std::string opt = "--" + key;
    std::replace(opt.begin(), opt.end(), '_', '-');
    app.add_option(opt, raw[i], help);
  }

  using Cmd = std::function<StageResult(const PipelineConfig&)>;
  const std::vector<std::tuple<std::string, std::string, Cmd>> commands = {
      {"gen-synth", "generate the synthetic feature corpus", cmd_gen_synth},
      {"pool", "average-pool the feature corpus", cmd_pool},
      {"kmeans-train", "fit mini-batch k-means on pooled frames", cmd_kmeans_train},
      {"kmeans-apply", "map pooled frames to cluster ids", cmd_kmeans_apply},
      {"dedup", "collapse repeated cluster ids", cmd_dedup},
      {"bpe-train", "learn BPE merges over pseudo-characters", cmd_bpe_train},
      {"tokenize", "encode pseudo-characters into BPE tokens", cmd_tokenize},
      {"stats", "report sequence-length compression", cmd_stats},
      {"pretrain", "train the encoder-decoder model", cmd_pretrain},
      {"pretrain-transducer", "train the transducer model", cmd_pretrain_transducer},
      {"decode", "decode every utterance with the selected model", cmd_decode},
      {"score", "token error rate of the decoded output", cmd_score},
  };
  std::string chosen;
  for (const auto& [name, help, fn] : commands)
    app.add_subcommand(name, help)->callback([&chosen, n = name] { chosen = n; });
  app.add_subcommand("pipeline", "run every stage in order")->callback([&chosen] {
    chosen = "pipeline";
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    KeyValues file;
    if (!config_file.empty()) {
      if (!fs::exists(config_file))
        throw ArgumentError(fmt::format("config file {} not found", config_file));
      file = parse_config_text(detail::read_text_file(config_file));
    }
    for (std::size_t i = 0; i < config_keys().size(); ++i)
      if (!raw[i].empty()) flags[config_keys()[i].first] = raw[i];
    if (!flags.count("work_dir") && !file.count("work_dir")) {
      if (const char* env = std::getenv(kWorkDirEnv); env && *env) flags["work_dir"] = env;
    }
    const PipelineConfig cfg = resolve_config(file, flags);
    if (cfg.work_dir.empty())
      throw ArgumentError(fmt::format("no work directory: pass --work-dir or set {}", kWorkDirEnv));

    WorkDirLock lock(cfg.work_dir);
    if (chosen == "pipeline") {
      cmd_pipeline(cfg);
    } else {
      for (const auto& [name, help, fn] : commands)
        if (name == chosen) fn(cfg);
    }
    return 0;
  } catch (const TrainingDivergedError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace pseudolang::cli
