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

#ifndef POET_POSE_H_
#define POET_POSE_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace poet {

// COCO convention: v = 0 unlabeled, 1 labeled but occluded, 2 visible.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  int v = 0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct ImageSize {
  double width = 0.0;
  double height = 0.0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct InstanceAnnotation {
  std::vector<Keypoint> keypoints;
  ImageSize image_size;

  friend bool operator==(const InstanceAnnotation&, const InstanceAnnotation&) = default;
};

enum class PoseClass : uint8_t { kHuman = 0, kNonObject = 1 };

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// One instance in normalized image coordinates: the center of mass of the
// visible keypoints, per-keypoint offsets from that center, and binary
// visibilities duplicated per coordinate. For K keypoints both `offsets` and
// `visibilities` hold 2K values laid out as [x_1, y_1, x_2, y_2, ...].
//
// Prediction slots reuse this type with visibility scores in (0, 1) instead
// of binary flags.
struct PoseVector {
  Point2 center;
  std::vector<double> offsets;
  std::vector<double> visibilities;
  PoseClass cls = PoseClass::kNonObject;

  int num_keypoints() const { return static_cast<int>(offsets.size() / 2); }
  bool is_human() const { return cls == PoseClass::kHuman; }

  friend bool operator==(const PoseVector&, const PoseVector&) = default;
};

PoseVector NonObjectPose(int num_keypoints);

// Center of mass of the visible (v > 0) keypoints, normalized per axis by the
// image size. Annotations without a visible keypoint become non-objects.
PoseVector EncodePose(const InstanceAnnotation& ann);

// Pixel keypoints (center + offset) * size. v is 1 where the visibility value
// is above one half.
std::vector<Keypoint> DecodePose(const PoseVector& pose, ImageSize size);

// Fixed-size slot collection; humans first in their given order, then
// non-object padding.
struct TargetSet {
  std::vector<PoseVector> slots;

  int size() const { return static_cast<int>(slots.size()); }
  int num_humans() const;
};

// Throws kTooManyInstances if more than `num_slots` poses are given.
TargetSet PadTargets(std::span<const PoseVector> poses, int num_slots, int num_keypoints);

struct PredictionSlot {
  std::array<double, 2> class_logits{0.0, 0.0};
  // Index 0 is the human class, index 1 the non-object class.
  std::array<double, 2> class_probs{0.5, 0.5};
  PoseVector pose;

  double human_prob() const { return class_probs[0]; }
  double prob(PoseClass c) const { return class_probs[static_cast<size_t>(c)]; }
};

using PredictionSet = std::vector<PredictionSlot>;

// Flat interchange layout [x_c, y_c, dx_1, dy_1, v_1, ..., dx_K, dy_K, v_K]
// with one visibility per keypoint.
std::vector<double> FlattenPose(const PoseVector& pose);
PoseVector UnflattenPose(std::span<const double> flat, PoseClass cls);

std::array<double, 2> SoftmaxPair(std::array<double, 2> logits);

}  // namespace poet

#endif  // POET_POSE_H_
