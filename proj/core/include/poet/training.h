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

#ifndef POET_TRAINING_H_
#define POET_TRAINING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "poet/config.h"
#include "poet/data.h"
#include "poet/loss.h"
#include "poet/metrics.h"
#include "poet/model.h"
#include "poet/optimizer.h"

namespace poet {

// Loss and parameter gradients of one image, with the batch-level normalizers
// so that per-image results sum to the batch loss.
struct SampleStep {
  LossBreakdown loss;
  Assignment assignment;
  std::vector<ad::Tensor> grads;
};

// `loss` and `assignment` describe the final decoder layer. With `aux_loss`
// every earlier layer is matched and penalized on its own, and the gradients
// are those of the sum over layers.
SampleStep ComputeSampleStep(const PoetModel& model, const ad::Tensor& image,
                             const TargetSet& targets, const LossWeights& weights,
                             const LossNormalizers& norms, bool train, Rng& rng,
                             bool aux_loss = false);

struct EpochOptions {
  int batch_size = 12;
  double clip_norm = 0.1;
  int threads = 1;
  // Seeds the shuffle order and the dropout streams of this epoch.
  uint64_t seed = 0;
  // Learning rates are divided by this for the whole epoch.
  double lr_divisor = 1.0;
  // Add a Hungarian loss on every intermediate decoder layer.
  bool aux_loss = false;
};

struct EpochStats {
  // Mean over batches of the batch loss.
  LossBreakdown loss;
  double mean_grad_norm = 0.0;
  int batches = 0;
};

// One pass over the dataset: per batch, forward every image, match on plain
// values, record the loss at the fixed assignment, back-propagate, clip and
// apply one AdamW step. Per-image work may run on `threads` workers; gradients
// are reduced in sample order, so results do not depend on the thread count.
// Errors are rethrown with the batch index attached.
EpochStats TrainEpoch(PoetModel& model, const Dataset& dataset, const LossWeights& weights,
                      OptimState& optim, const EpochOptions& options);

// Loss of the dataset under eval-mode forward, batched in storage order.
LossBreakdown DatasetLoss(const PoetModel& model, const Dataset& dataset, const LossWeights& weights,
                          int batch_size);

struct EvalSettings {
  double score_threshold = 0.5;
  // Keep at most this many highest-scoring slots per image; 0 keeps all.
  int top_k = 0;
  // Empty selects the COCO constants for 17 keypoints and 0.1 otherwise.
  OksParams oks;
};

OksParams DefaultOksParams(int num_keypoints);

// Slots whose human probability reaches the threshold, decoded to image
// coordinates.
std::vector<ScoredPose> SelectDetections(const PredictionSet& preds, ImageSize size,
                                         const EvalSettings& settings);

std::vector<std::vector<GroundTruthPose>> GroundTruthOf(const Dataset& dataset);

struct EvalReport {
  EvalResult final;
  // One entry per decoder layer; the last equals `final`.
  std::vector<EvalResult> per_layer;
  // Eval-mode loss of the final layer.
  LossBreakdown loss;
};

EvalReport Evaluate(const PoetModel& model, const Dataset& dataset, const EvalSettings& settings,
                    const LossWeights& weights, int batch_size);

// Checkpoint = parameters + optimizer state + run metadata, with the
// effective run config written next to it (same stem, `.cfg`).
struct LoadedCheckpoint {
  RunConfig config;
  ModelConfig model_config;
  int epoch = 0;
  std::vector<NamedTensor> tensors;
};

void SaveTrainingCheckpoint(const std::string& path, const RunConfig& config,
                            const PoetModel& model, const OptimState& optim, int epoch);
LoadedCheckpoint LoadTrainingCheckpoint(const std::string& path);
// Rebuilds the model stored in a checkpoint.
PoetModel ModelFromCheckpoint(const LoadedCheckpoint& checkpoint);

// Train / validation data for a run: files when configured, synthetic
// otherwise. Applies the dataset filters and checks instance counts against
// the number of query slots.
struct RunData {
  Dataset train;
  Dataset val;
};
RunData PrepareRunData(const RunConfig& config);

// Full training run writing config.cfg, losses.csv, map.csv,
// per_layer_map.csv and checkpoints into config.out_dir.
class Trainer {
 public:
  Trainer(RunConfig config, RunData data);

  // Restores parameters, optimizer state and epoch; CSV rows after that
  // epoch are discarded.
  void Resume(const std::string& checkpoint_path);

  // Trains until schedule.total_epochs; returns the path of the final
  // checkpoint.
  std::string Run();

  const PoetModel& model() const { return model_; }
  int epoch() const { return epoch_; }

 private:
  void WriteHeaders();
  void LogEpoch(int epoch, const EpochStats& stats, const EvalReport* eval);
  std::string CheckpointPath(int epoch) const;

  RunConfig config_;
  RunData data_;
  PoetModel model_;
  OptimState optim_;
  int epoch_ = 0;
};

}  // namespace poet

#endif  // POET_TRAINING_H_
