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

// Pipeline orchestration behind the `pseudolang` command line tool.
//
// Every stage reads its inputs from a work directory, writes its documented
// artifact format there, and records a completion marker holding the
// checksums of its inputs and outputs. A stage whose marker matches the
// current inputs and parameters is skipped.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pseudolang::cli {

struct PipelineConfig {
  std::filesystem::path work_dir;
  std::filesystem::path feature_root;  // empty: the work dir's synthetic corpus
  std::string profile = "base";

  std::size_t kernel = 2;
  std::size_t clusters = 500;
  std::size_t vocab = 30000;
  bool standardize = false;
  std::uint64_t seed = 0;

  std::size_t kmeans_batch = 10000;
  std::size_t kmeans_epochs = 20;
  std::size_t kmeans_init_size = 30000;

  std::size_t d_model = 64;
  std::size_t ff_dim = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t joint_dim = 32;
  bool tie_embeddings = true;

  std::size_t steps = 1000;
  std::size_t batch = 8;
  double lr = 1e-3;
  double warmup = 0.1;
  std::string optimizer = "adam";
  double clip = 1.0;

  std::string model = "seq2seq";
  std::size_t beam = 10;
  std::size_t max_len = 100;
  double length_penalty = 0.0;
  std::size_t max_symbols_per_frame = 5;
  bool with_transducer = false;

  std::size_t synth_utterances = 500;
  std::size_t synth_states = 25;
  std::size_t synth_dim = 16;
  std::size_t synth_min_segments = 4;
  std::size_t synth_max_segments = 10;
  std::size_t synth_min_dwell = 3;
  double synth_dwell_mean = 8.0;
  double synth_noise = 0.3;
  double synth_spread = 3.0;
  std::size_t synth_branching = 3;
};

struct ProfilePreset {
  std::string name;
  std::size_t clusters;
  std::size_t vocab;
  std::size_t d_model;
  std::size_t ff_dim;
  std::size_t encoder_layers;
  std::size_t decoder_layers;
};

/// base: C=500, V=30000; tiny: V=10000; transducer: C=25, V=1000 with a
/// single label-network layer.
const std::vector<ProfilePreset>& profile_presets();

using KeyValues = std::map<std::string, std::string>;

/// Every recognised config key with its help text.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Flat `key = value` lines; `#` starts a comment.
KeyValues parse_config_text(const std::string& text);

/// Defaults, then the profile preset, then `file`, then `flags`.
PipelineConfig resolve_config(const KeyValues& file, const KeyValues& flags);

enum class StageStatus { kRan, kSkipped };

struct StageResult {
  std::string stage;
  StageStatus status = StageStatus::kRan;
};

StageResult cmd_gen_synth(const PipelineConfig& cfg);
StageResult cmd_pool(const PipelineConfig& cfg);
StageResult cmd_kmeans_train(const PipelineConfig& cfg);
StageResult cmd_kmeans_apply(const PipelineConfig& cfg);
StageResult cmd_dedup(const PipelineConfig& cfg);
StageResult cmd_bpe_train(const PipelineConfig& cfg);
StageResult cmd_tokenize(const PipelineConfig& cfg);
StageResult cmd_stats(const PipelineConfig& cfg);
StageResult cmd_pretrain(const PipelineConfig& cfg);
StageResult cmd_pretrain_transducer(const PipelineConfig& cfg);
StageResult cmd_decode(const PipelineConfig& cfg);
StageResult cmd_score(const PipelineConfig& cfg);

/// Every stage in dependency order.
std::vector<StageResult> cmd_pipeline(const PipelineConfig& cfg);

/// Exclusive lock on a work directory, released on destruction. A second
/// holder gets StageError.
class WorkDirLock {
 public:
  explicit WorkDirLock(const std::filesystem::path& work_dir);
  ~WorkDirLock();
  WorkDirLock(const WorkDirLock&) = delete;
  WorkDirLock& operator=(const WorkDirLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline constexpr char kWorkDirEnv[] = "PSEUDOLANG_WORK_DIR";

/// Entry point of the command line tool. Returns the process exit status:
/// 0 success, 1 validation error, 2 numeric failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace pseudolang::cli
