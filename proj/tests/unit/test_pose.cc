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


#include <cmath>

#include "doctest.h"
#include "poet/error.h"
#include "poet/pose.h"
#include "poet/pose_io.h"
#include "poet/random.h"
#include "test_util.h"

using namespace poet;
using testutil::CodeOf;

namespace {

InstanceAnnotation RandomAnnotation(Rng& rng, int k, double w, double h) {
  InstanceAnnotation a;
  a.image_size = {w, h};
  bool any = false;
  for (int i = 0; i < k; ++i) {
    Keypoint kp{rng.Uniform(0.0, w), rng.Uniform(0.0, h), rng.UniformInt(0, 2)};
    any = any || kp.v > 0;
    a.keypoints.push_back(kp);
  }
  if (!any) a.keypoints[0].v = 2;
  return a;
}

}  // namespace

TEST_CASE("encode two visible keypoints") {
  const InstanceAnnotation a{{{10, 10, 2}, {30, 30, 2}}, {100, 100}};
  const PoseVector p = EncodePose(a);
  CHECK(p.is_human());
  CHECK(p.center.x == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(p.center.y == doctest::Approx(0.2).epsilon(1e-15));
  const std::vector<double> offsets = {-0.1, -0.1, 0.1, 0.1};
  for (size_t i = 0; i < 4; ++i) CHECK(p.offsets[i] == doctest::Approx(offsets[i]).epsilon(1e-14));
  CHECK(p.visibilities == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("encode single visible keypoint") {
  const PoseVector p = EncodePose({{{50, 50, 1}}, {100, 100}});
  CHECK(p.center == Point2{0.5, 0.5});
  CHECK(p.offsets == std::vector<double>{0, 0});
  CHECK(p.visibilities == std::vector<double>{1, 1});
}

TEST_CASE("encode without visible keypoints gives a non-object") {
  const PoseVector p = EncodePose({{{5, 5, 0}, {7, 7, 0}}, {100, 100}});
  CHECK_FALSE(p.is_human());
  CHECK(p.visibilities == std::vector<double>(4, 0.0));
  CHECK(p.offsets == std::vector<double>(4, 0.0));
}

TEST_CASE("invisible keypoints store zero offsets") {
  const PoseVector p = EncodePose({{{10, 20, 2}, {90, 90, 0}}, {100, 100}});
  CHECK(p.offsets[2] == 0.0);
  CHECK(p.offsets[3] == 0.0);
  CHECK(p.visibilities == std::vector<double>{1, 1, 0, 0});
}

TEST_CASE("decode hand example") {
  PoseVector p;
  p.cls = PoseClass::kHuman;
  p.center = {0.5, 0.5};
  p.offsets = {0.1, -0.1};
  p.visibilities = {1, 1};
  const auto kps = DecodePose(p, {200, 100});
  REQUIRE(kps.size() == 1);
  CHECK(kps[0].x == doctest::Approx(120.0).epsilon(1e-14));
  CHECK(kps[0].y == doctest::Approx(40.0).epsilon(1e-14));
  CHECK(kps[0].v == 1);
}

TEST_CASE("decode non-object marks every keypoint unlabeled") {
  for (const Keypoint& kp : DecodePose(NonObjectPose(3), {64, 64})) CHECK(kp.v == 0);
}

TEST_CASE("encode/decode properties on random annotations") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = rng.UniformInt(1, 17);
    const double w = rng.Uniform(10, 700), h = rng.Uniform(10, 700);
    const InstanceAnnotation a = RandomAnnotation(rng, k, w, h);
    const PoseVector p = EncodePose(a);
    REQUIRE(p.offsets.size() == static_cast<size_t>(2 * k));
    REQUIRE(p.visibilities.size() == static_cast<size_t>(2 * k));
    for (int i = 0; i < k; ++i) CHECK(p.visibilities[2 * i] == p.visibilities[2 * i + 1]);

    // Roundtrip of visible pixels.
    const auto kps = DecodePose(p, a.image_size);
    double sx = 0, sy = 0;
    int n = 0;
    for (int i = 0; i < k; ++i) {
      const Keypoint& orig = a.keypoints[static_cast<size_t>(i)];
      if (orig.v == 0) {
        CHECK(kps[static_cast<size_t>(i)].v == 0);
        continue;
      }
      CHECK(std::abs(kps[static_cast<size_t>(i)].x - orig.x) <= 1e-12 * std::max(1.0, orig.x));
      CHECK(std::abs(kps[static_cast<size_t>(i)].y - orig.y) <= 1e-12 * std::max(1.0, orig.y));
      sx += kps[static_cast<size_t>(i)].x;
      sy += kps[static_cast<size_t>(i)].y;
      ++n;
    }
    // Center of mass of the decoded keypoints.
    CHECK(sx / n == doctest::Approx(p.center.x * w).epsilon(1e-12));
    CHECK(sy / n == doctest::Approx(p.center.y * h).epsilon(1e-12));

    // Scale covariance with a power-of-two factor is exact.
    InstanceAnnotation scaled = a;
    scaled.image_size = {w * 4, h * 4};
    for (Keypoint& kp : scaled.keypoints) {
      kp.x *= 4;
      kp.y *= 4;
    }
    CHECK(EncodePose(scaled) == p);
  }
}

TEST_CASE("pad targets") {
  const PoseVector human = EncodePose({{{10, 10, 2}}, {100, 100}});
  const std::vector<PoseVector> two = {human, human};
  const TargetSet t = PadTargets(two, 5, 1);
  CHECK(t.size() == 5);
  CHECK(t.num_humans() == 2);
  CHECK(t.slots[0].is_human());
  CHECK(t.slots[1].is_human());
  for (int i = 2; i < 5; ++i) CHECK(t.slots[static_cast<size_t>(i)] == NonObjectPose(1));

  const TargetSet empty = PadTargets({}, 25, 17);
  CHECK(empty.size() == 25);
  CHECK(empty.num_humans() == 0);

  const std::vector<PoseVector> thirteen(13, EncodePose({{{1, 1, 2}}, {10, 10}}));
  CHECK(PadTargets(thirteen, 25, 1).num_humans() == 13);
  CHECK(CodeOf([&] { PadTargets(thirteen, 12, 1); }) == ErrorCode::kTooManyInstances);
}

TEST_CASE("pad targets keeps human order") {
  const PoseVector a = EncodePose({{{10, 10, 2}}, {100, 100}});
  const PoseVector b = EncodePose({{{70, 20, 2}}, {100, 100}});
  const std::vector<PoseVector> poses = {b, a};
  const TargetSet t = PadTargets(poses, 3, 1);
  CHECK(t.slots[0] == b);
  CHECK(t.slots[1] == a);
}

TEST_CASE("flat pose layout") {
  const PoseVector p = EncodePose({{{10, 20, 2}, {30, 40, 0}}, {100, 100}});
  const std::vector<double> flat = FlattenPose(p);
  REQUIRE(flat.size() == 8);
  CHECK(flat[0] == p.center.x);
  CHECK(flat[1] == p.center.y);
  CHECK(flat[4] == 1.0);
  CHECK(flat[7] == 0.0);
  CHECK(UnflattenPose(flat, PoseClass::kHuman) == p);
}

TEST_CASE("softmax pair") {
  const auto p = SoftmaxPair({0.0, 0.0});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
  const auto q = SoftmaxPair({1000.0, -1000.0});
  CHECK(q[0] == 1.0);
  CHECK(std::isfinite(q[1]));
}

TEST_CASE("pose line roundtrip") {
  TargetRecord t;
  t.image_id = 4;
  const std::vector<PoseVector> poses = {EncodePose({{{10, 20, 2}, {30, 40, 0}}, {100, 100}})};
  t.targets = PadTargets(poses, 3, 2);
  const TargetRecord back = ParseTargetLine(FormatTargetLine(t));
  CHECK(back.image_id == t.image_id);
  REQUIRE(back.targets.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(back.targets.slots[i] == t.targets.slots[i]);

  PredictionRecord pr;
  PredictionSlot slot;
  slot.class_probs = {0.75, 0.25};
  slot.pose = poses[0];
  slot.pose.visibilities = {0.3, 0.3, 0.9, 0.9};
  pr.preds = {slot};
  const PredictionRecord pb = ParsePredictionLine(FormatPredictionLine(pr));
  REQUIRE(pb.preds.size() == 1);
  CHECK(pb.preds[0].class_probs == slot.class_probs);
  CHECK(pb.preds[0].pose.offsets == slot.pose.offsets);
  CHECK(pb.preds[0].pose.visibilities == slot.pose.visibilities);
  CHECK_FALSE(pb.image_id.has_value());
}

TEST_CASE("malformed pose lines") {
  CHECK(CodeOf([] { ParseTargetLine("{not json"); }) == ErrorCode::kParseError);
  CHECK(CodeOf([] { ParseTargetLine(R"({"image_id": 1})"); }) == ErrorCode::kMissingField);
  CHECK(CodeOf([] { ParseTargetLine(R"({"targets": [{"pose": [0.5, 0.5, 0.1], "class": 0}]})"); }) ==
        ErrorCode::kSizeMismatch);
}
