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

#include "poet/pose.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "poet/error.h"

namespace poet {

PoseVector NonObjectPose(int num_keypoints) {
  PoseVector p;
  p.offsets.assign(static_cast<size_t>(2 * num_keypoints), 0.0);
  p.visibilities.assign(static_cast<size_t>(2 * num_keypoints), 0.0);
  p.cls = PoseClass::kNonObject;
  return p;
}

PoseVector EncodePose(const InstanceAnnotation& ann) {
  const double w = ann.image_size.width;
  const double h = ann.image_size.height;
  if (!(w > 0.0) || !(h > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "image size must be positive");
  }
  const int k = static_cast<int>(ann.keypoints.size());
  double sx = 0.0, sy = 0.0;
  int visible = 0;
  for (const Keypoint& kp : ann.keypoints) {
    if (kp.v > 0) {
      sx += kp.x;
      sy += kp.y;
      ++visible;
    }
  }
  if (visible == 0) return NonObjectPose(k);

  const double cx = sx / visible;
  const double cy = sy / visible;
  PoseVector p = NonObjectPose(k);
  p.cls = PoseClass::kHuman;
  p.center = {cx / w, cy / h};
  for (int i = 0; i < k; ++i) {
    const Keypoint& kp = ann.keypoints[static_cast<size_t>(i)];
    if (kp.v <= 0) continue;
    p.offsets[static_cast<size_t>(2 * i)] = kp.x / w - p.center.x;
    p.offsets[static_cast<size_t>(2 * i + 1)] = kp.y / h - p.center.y;
    p.visibilities[static_cast<size_t>(2 * i)] = 1.0;
    p.visibilities[static_cast<size_t>(2 * i + 1)] = 1.0;
  }
  return p;
}

std::vector<Keypoint> DecodePose(const PoseVector& pose, ImageSize size) {
  const int k = pose.num_keypoints();
  std::vector<Keypoint> out(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    Keypoint& kp = out[static_cast<size_t>(i)];
    kp.x = (pose.center.x + pose.offsets[static_cast<size_t>(2 * i)]) * size.width;
    kp.y = (pose.center.y + pose.offsets[static_cast<size_t>(2 * i + 1)]) * size.height;
    const bool visible =
        pose.is_human() && pose.visibilities[static_cast<size_t>(2 * i)] > 0.5;
    kp.v = visible ? 1 : 0;
  }
  return out;
}

int TargetSet::num_humans() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(),
                                        [](const PoseVector& p) { return p.is_human(); }));
}

TargetSet PadTargets(std::span<const PoseVector> poses, int num_slots, int num_keypoints) {
  if (static_cast<int>(poses.size()) > num_slots) {
    throw Error(ErrorCode::kTooManyInstances, std::to_string(poses.size()) +
                                                  " instances for " + std::to_string(num_slots) +
                                                  " slots");
  }
  TargetSet set;
  set.slots.reserve(static_cast<size_t>(num_slots));
  for (const PoseVector& p : poses) {
    if (p.num_keypoints() != num_keypoints) {
      throw Error(ErrorCode::kSizeMismatch, "pose has " + std::to_string(p.num_keypoints()) +
                                                " keypoints, expected " +
                                                std::to_string(num_keypoints));
    }
    set.slots.push_back(p);
  }
  while (set.size() < num_slots) set.slots.push_back(NonObjectPose(num_keypoints));
  return set;
}

std::vector<double> FlattenPose(const PoseVector& pose) {
  const int k = pose.num_keypoints();
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(2 + 3 * k));
  flat.push_back(pose.center.x);
  flat.push_back(pose.center.y);
  for (int i = 0; i < k; ++i) {
    flat.push_back(pose.offsets[static_cast<size_t>(2 * i)]);
    flat.push_back(pose.offsets[static_cast<size_t>(2 * i + 1)]);
    flat.push_back(pose.visibilities[static_cast<size_t>(2 * i)]);
  }
  return flat;
}

PoseVector UnflattenPose(std::span<const double> flat, PoseClass cls) {
  if (flat.size() < 2 || (flat.size() - 2) % 3 != 0) {
    throw Error(ErrorCode::kSizeMismatch,
                "flat pose length " + std::to_string(flat.size()) + " is not 2 + 3K");
  }
  const int k = static_cast<int>((flat.size() - 2) / 3);
  PoseVector p = NonObjectPose(k);
  p.cls = cls;
  p.center = {flat[0], flat[1]};
  for (int i = 0; i < k; ++i) {
    const size_t base = static_cast<size_t>(2 + 3 * i);
    p.offsets[static_cast<size_t>(2 * i)] = flat[base];
    p.offsets[static_cast<size_t>(2 * i + 1)] = flat[base + 1];
    p.visibilities[static_cast<size_t>(2 * i)] = flat[base + 2];
    p.visibilities[static_cast<size_t>(2 * i + 1)] = flat[base + 2];
  }
  return p;
}

std::array<double, 2> SoftmaxPair(std::array<double, 2> logits) {
  const double m = std::max(logits[0], logits[1]);
  const double a = std::exp(logits[0] - m);
  const double b = std::exp(logits[1] - m);
  return {a / (a + b), b / (a + b)};
}

}  // namespace poet
