// Copyright 2026 The poet Authors. All Rights Reserved.
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

#ifndef POET_CONFIG_H_
#define POET_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "poet/data.h"
#include "poet/matching.h"
#include "poet/model.h"
#include "poet/optimizer.h"

namespace poet {

struct DataConfig {
  // COCO annotation file or synthetic cache manifest; empty selects
  // on-the-fly synthetic data built from the `synth` section.
  std::string train;
  std::string val;
  // Held-out synthetic samples when `val` is empty.
  int val_samples = 400;
  // Drop samples with more humans than query slots instead of failing.
  bool drop_overfull = false;
};

struct TrainConfig {
  int batch_size = 12;
  int threads = 1;
  // Global-norm gradient clipping; <= 0 disables it.
  double clip_norm = 0.1;
  // Also penalize every intermediate decoder layer (off in the reference
  // objective).
  bool aux_loss = false;
  int checkpoint_every = 10;
  // Evaluate the validation split every this many epochs (0 = never).
  int eval_every = 1;
  double score_threshold = 0.5;
  // Keep at most this many highest-scoring slots per image (0 = no limit).
  int top_k = 0;
};

// Every tunable of a training run. Defaults reproduce the reference
// hyperparameters; the number of keypoints and image channels come from the
// dataset.
struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "run";
  ModelConfig model;
  LossWeights loss;
  AdamWConfig optimizer;
  Schedule schedule;
  TrainConfig train;
  DataConfig data;
  SynthConfig synth;

  // Throws kInvalidConfig on the first violated constraint.
  void Validate() const;
};

// Flat `section.key = value` text; `#` starts a comment. Throws kParseError
// for malformed lines and kInvalidConfig for unknown keys or bad values, both
// with the line number.
RunConfig ParseRunConfig(const std::string& text, RunConfig base = RunConfig{});
RunConfig LoadRunConfig(const std::string& path);

// Applies one `key=value` override.
void ApplyOverride(RunConfig& config, const std::string& assignment);
void SetConfigValue(RunConfig& config, const std::string& key, const std::string& value);

// Every key, in a fixed order, in the same format ParseRunConfig reads.
std::string DumpRunConfig(const RunConfig& config);
std::vector<std::string> RunConfigKeys();

}  // namespace poet

#endif  // POET_CONFIG_H_
