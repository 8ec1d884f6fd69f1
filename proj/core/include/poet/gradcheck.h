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

#ifndef POET_GRADCHECK_H_
#define POET_GRADCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "poet/loss.h"
#include "poet/matching.h"

namespace poet {

struct GradcheckOptions {
  uint64_t seed = 0;
  // Random loss instances; each draws N in [1, max_slots] and K in
  // [1, max_keypoints].
  int instances = 100;
  int max_slots = 6;
  int max_keypoints = 5;
  double tolerance = 1e-4;
};

struct GradcheckResult {
  std::string component;
  double max_relative_error = 0.0;
  int64_t entries_checked = 0;
  // Entries whose one-sided differences disagree, i.e. the probe straddles a
  // ReLU or |.| kink; these are excluded from the error.
  int64_t entries_skipped = 0;
  bool passed = false;
};

// A random set-prediction problem: padded targets and raw prediction
// tensors. Matched visible offsets are nudged at least `margin` away from their
// targets so central differences rarely straddle the |.| kink. The assignment
// is always optimal for the returned predictions.
struct LossInstance {
  TargetSet targets;
  PredictionTensors preds;
  Assignment assignment;
};
LossInstance RandomLossInstance(uint64_t seed, int num_slots, int num_keypoints,
                                double margin = 1e-2);

GradcheckResult GradcheckOps(const GradcheckOptions& options);
GradcheckResult GradcheckLoss(const GradcheckOptions& options);
GradcheckResult GradcheckModel(const GradcheckOptions& options);

// Component names: "ops", "loss", "model". Throws kInvalidConfig for an
// unknown name.
std::vector<std::string> GradcheckComponents();
GradcheckResult RunGradcheck(const std::string& component, const GradcheckOptions& options);

}  // namespace poet

#endif  // POET_GRADCHECK_H_
