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

#ifndef POET_POSE_IO_H_
#define POET_POSE_IO_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poet/metrics.h"
#include "poet/pose.h"

namespace poet {

// JSON-lines pose interchange, one image per line. Each pose is the flat
// [x_c, y_c, dx_1, dy_1, v_1, ...] vector:
//   {"image_id": 3, "targets": [{"pose": [...], "class": 0}, ...]}
//   {"image_id": 3, "preds": [{"pose": [...], "probs": [p_human, p_none]}, ...]}
// `class` is 0 for a person and 1 for a non-object; image_id is optional.
struct TargetRecord {
  std::optional<int64_t> image_id;
  TargetSet targets;
};

struct PredictionRecord {
  std::optional<int64_t> image_id;
  PredictionSet preds;
};

// Throw kParseError / kMissingField / kSizeMismatch on malformed input.
TargetRecord ParseTargetLine(const std::string& line);
PredictionRecord ParsePredictionLine(const std::string& line);
std::string FormatTargetLine(const TargetRecord& record);
std::string FormatPredictionLine(const PredictionRecord& record);

// Blank lines are skipped; errors are prefixed with "line N: ".
std::vector<TargetRecord> ReadTargetsJsonl(const std::string& path);
std::vector<PredictionRecord> ReadPredictionsJsonl(const std::string& path);

// COCO keypoint results: [{"image_id": 1, "keypoints": [x, y, v, ...],
// "score": 0.9}, ...]. Detections are grouped by the position of their image
// id in `image_ids`; unknown ids throw kParseError.
std::vector<std::vector<ScoredPose>> ParseCocoResults(const std::string& json_text,
                                                      const std::vector<int64_t>& image_ids);

}  // namespace poet

#endif  // POET_POSE_IO_H_
