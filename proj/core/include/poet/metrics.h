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

#ifndef POET_METRICS_H_
#define POET_METRICS_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poet/pose.h"

namespace poet {

// Per-keypoint constants k_i of the OKS kernel.
struct OksParams {
  std::vector<double> k;

  // COCO person keypoints. The published per-keypoint sigmas enter the kernel
  // doubled (k_i = 2 sigma_i), as in the reference evaluation code.
  static OksParams Coco();
  static OksParams Uniform(int num_keypoints, double k = 0.1);
};

// Object keypoint similarity over keypoints the ground truth marks v > 0:
//   sum_i exp(-d_i^2 / (2 s^2 k_i^2)) / #visible.
// Throws kNoVisibleKeypoints when the ground truth has none, and
// kInvalidConfig unless scale > 0.
double Oks(std::span<const Keypoint> pred, std::span<const Keypoint> gt, double scale,
           const OksParams& params);

// Area of the tight box around the v > 0 keypoints (all keypoints when
// `visible_only` is false).
double KeypointBoxArea(std::span<const Keypoint> keypoints, bool visible_only = true);

struct GroundTruthPose {
  std::vector<Keypoint> keypoints;
  // Object area in square pixels; negative means "use the visible-keypoint
  // box". The OKS scale is sqrt(area).
  double area = -1.0;
};

struct ScoredPose {
  std::vector<Keypoint> keypoints;
  double score = 0.0;
};

struct EvalOptions {
  std::vector<double> thresholds = DefaultThresholds();
  int max_detections = 20;
  OksParams oks;
  // Lower bound on the area used as s^2, so single-keypoint instances keep a
  // positive scale.
  double min_area = 1.0;

  static std::vector<double> DefaultThresholds();
};

// Fields are empty when the corresponding subset has no ground truth.
struct EvalResult {
  std::optional<double> ap, ap50, ap75, ap_m, ap_l;
  std::optional<double> ar, ar50, ar75, ar_m, ar_l;
  // AP over all areas at each threshold of EvalOptions::thresholds.
  std::vector<std::optional<double>> ap_per_threshold;
};

// COCO-style evaluation: per image and threshold, detections in descending
// score order greedily take the unmatched ground truth with the highest OKS at
// or above the threshold. Precision is interpolated at 101 recall points.
// Area buckets: medium [32^2, 96^2), large [96^2, inf).
EvalResult EvaluateDetections(const std::vector<std::vector<ScoredPose>>& detections,
                              const std::vector<std::vector<GroundTruthPose>>& ground_truth,
                              const EvalOptions& options);

// One-line header and row in the AP/AP50/AP75/APM/APL/AR/... column order;
// undefined entries print as "-".
std::string FormatEvalHeader();
std::string FormatEvalRow(const EvalResult& r);

}  // namespace poet

#endif  // POET_METRICS_H_
