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

#ifndef POET_LOSS_H_
#define POET_LOSS_H_

#include "poet/matching.h"
#include "poet/pose.h"
#include "poet/tape.h"

namespace poet {

inline constexpr double kMinProbability = 1e-12;

struct PoseLossTerms {
  double keypoint_l1 = 0.0;
  double visibility_l2 = 0.0;
  double center_l2 = 0.0;

  double total() const { return keypoint_l1 + visibility_l2 + center_l2; }
};

// Weighted pose discrepancy between a human target and a prediction:
//   lambda_l1  * |V o Z - V o Z'|_1
// + lambda_l2  * |V - V'|_2^2
// + lambda_ctr * |C - C'|_2^2
// V is the target's duplicated visibility vector, so offsets of keypoints the
// target marks invisible never contribute. Throws kClassMismatch for a
// non-object target.
PoseLossTerms PoseLoss(const PoseVector& target, const PoseVector& pred, const LossWeights& weights);

struct LossBreakdown {
  double total = 0.0;
  double class_nll = 0.0;
  double keypoint_l1 = 0.0;
  double visibility_l2 = 0.0;
  double center_l2 = 0.0;
};

// Divisors applied to the summed loss terms. The class term is divided by
// `classes` (slot count by default); the three pose terms by `pose` (humans in
// the batch, clamped to at least one).
struct LossNormalizers {
  double classes = 1.0;
  double pose = 1.0;

  static LossNormalizers ForBatch(int num_humans, int num_slots) {
    return {static_cast<double>(num_slots > 0 ? num_slots : 1),
            static_cast<double>(num_humans > 0 ? num_humans : 1)};
  }
};

LossBreakdown HungarianLoss(const TargetSet& targets, const PredictionSet& preds,
                            const Assignment& assignment, const LossWeights& weights,
                            const LossNormalizers& norms);

// Raw network outputs for N slots: class logits [N x 2], centers [N x 2],
// offsets [N x 2K], visibility scores [N x 2K] (already duplicated).
struct PredictionTensors {
  ad::Tensor class_logits;
  ad::Tensor centers;
  ad::Tensor offsets;
  ad::Tensor visibilities;
};

struct PredictionVars {
  ad::Var class_logits;
  ad::Var centers;
  ad::Var offsets;
  ad::Var visibilities;
};

PredictionTensors ValuesOf(const PredictionVars& vars);
PredictionSet ToPredictionSet(const PredictionTensors& t);

struct LossVars {
  ad::Var total;
  ad::Var class_nll;
  ad::Var keypoint_l1;
  ad::Var visibility_l2;
  ad::Var center_l2;

  LossBreakdown values() const;
};

// Records the same loss as HungarianLoss on the predictions' tape, with the
// assignment held fixed.
LossVars RecordHungarianLoss(const TargetSet& targets, const PredictionVars& preds,
                             const Assignment& assignment, const LossWeights& weights,
                             const LossNormalizers& norms);

// Gradient of the total loss with respect to every prediction output.
PredictionTensors LossGradients(const TargetSet& targets, const PredictionTensors& preds,
                                const Assignment& assignment, const LossWeights& weights,
                                const LossNormalizers& norms);

}  // namespace poet

#endif  // POET_LOSS_H_
