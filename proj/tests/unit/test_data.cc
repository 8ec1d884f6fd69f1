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
#include <set>
#include <string>

#include "doctest.h"
#include "poet/data.h"
#include "poet/error.h"
#include "poet/pose.h"
#include "test_util.h"

using namespace poet;
using testutil::CodeOf;

namespace {

const char* kFixture = R"({
  "images": [{"id": 7, "width": 640, "height": 480}, {"id": 9, "width": 100, "height": 100}],
  "annotations": [
    {"id": 1, "image_id": 7, "keypoints": [10, 20, 2, 30, 40, 1, 0, 0, 0], "area": 900.5},
    {"id": 2, "image_id": 7, "keypoints": [0, 0, 0, 0, 0, 0, 0, 0, 0]},
    {"id": 3, "image_id": 7, "iscrowd": 1, "keypoints": [1, 1, 2, 1, 1, 2, 1, 1, 2]}
  ],
  "categories": [{"id": 1, "name": "person", "keypoints": ["a", "b", "c"]}]
})";

SynthConfig SmallSynth() {
  SynthConfig c;
  c.num_samples = 40;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("coco fixture parses") {
  const Dataset ds = ParseCocoKeypoints(kFixture);
  CHECK(ds.num_keypoints == 3);
  CHECK(ds.keypoint_names == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(ds.samples.size() == 2);
  const Sample& s = ds.samples[0];
  CHECK(s.image_id == 7);
  CHECK(s.image_size == ImageSize{640, 480});
  REQUIRE(s.instances.size() == 2);
  CHECK(s.instances[0].keypoints[1] == Keypoint{30, 40, 1});
  CHECK(s.areas == std::vector<double>{900.5, -1.0});
  CHECK(s.image.empty());
  // The person without labeled keypoints is kept and encodes as a non-object.
  CHECK_FALSE(EncodePose(s.instances[1]).is_human());
  CHECK(ds.samples[1].instances.empty());
}

TEST_CASE("seventeen triplets give seventeen keypoints") {
  std::string kps;
  for (int i = 0; i < 17; ++i) kps += std::string(i ? "," : "") + "1,2,2";
  const std::string text = R"({"images":[{"id":1,"width":10,"height":10}],"annotations":[)"
                           R"({"image_id":1,"keypoints":[)" + kps + "]}]}";
  const Dataset ds = ParseCocoKeypoints(text);
  CHECK(ds.num_keypoints == 17);
  CHECK(ds.samples[0].instances[0].keypoints.size() == 17);

  const std::string mixed = R"({"images":[{"id":1,"width":10,"height":10}],"annotations":[)"
                            R"({"image_id":1,"keypoints":[1,2,2]},{"image_id":1,"keypoints":[1,2,2,3,4,2]}]})";
  CHECK(CodeOf([&] { ParseCocoKeypoints(mixed); }) == ErrorCode::kSizeMismatch);
}

TEST_CASE("coco parse errors carry locations") {
  try {
    ParseCocoKeypoints(R"({"images": [}, )");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParseError);
    CHECK(std::string(e.what()).find("byte 13") != std::string::npos);
  }
  try {
    ParseCocoKeypoints(R"({"images": [{"id": 1, "width": 4, "height": 4}],
                           "annotations": [{"image_id": 1}]})");
    FAIL("expected a missing field");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingField);
    CHECK(std::string(e.what()).find("$.annotations[0].keypoints") != std::string::npos);
  }
  CHECK(CodeOf([] { ParseCocoKeypoints(R"({"annotations": []})"); }) == ErrorCode::kMissingField);
}

TEST_CASE("coco serialization roundtrip") {
  const Dataset ds = ParseCocoKeypoints(kFixture);
  const Dataset back = ParseCocoKeypoints(SerializeCocoKeypoints(ds));
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.num_keypoints == ds.num_keypoints);
  CHECK(back.keypoint_names == ds.keypoint_names);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].image_id == ds.samples[i].image_id);
    CHECK(back.samples[i].image_size == ds.samples[i].image_size);
    CHECK(back.samples[i].instances == ds.samples[i].instances);
    CHECK(back.samples[i].areas == ds.samples[i].areas);
  }
  testutil::TempDir dir("data");
  SaveCocoKeypoints(ds, dir.file("a.json"));
  CHECK(LoadDataset(dir.file("a.json")).samples[0].instances == ds.samples[0].instances);
}

TEST_CASE("dataset filters") {
  Dataset ds = ParseCocoKeypoints(kFixture);
  CHECK(DropUnannotated(ds) == 1);
  CHECK(ds.samples.size() == 1);
  CHECK(DropOverfull(ds, 1) == 0);
  ds.samples[0].instances.push_back(ds.samples[0].instances[0]);
  CHECK(DropOverfull(ds, 1) == 1);
  CHECK(ds.samples.empty());
}

TEST_CASE("synthetic generation is deterministic") {
  const Dataset a = SynthGenerate(SmallSynth());
  const Dataset b = SynthGenerate(SmallSynth());
  REQUIRE(a.samples.size() == 40);
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].instances == b.samples[i].instances);
    CHECK(testutil::BitwiseEqual(a.samples[i].image, b.samples[i].image));
  }
  SynthConfig other = SmallSynth();
  other.seed = 4;
  CHECK(SynthGenerate(other).samples[0].instances != a.samples[0].instances);
}

TEST_CASE("synthetic samples respect the configuration") {
  SynthConfig c = SmallSynth();
  c.num_samples = 200;
  const Dataset ds = SynthGenerate(c);
  CHECK(ds.num_keypoints == c.num_keypoints);
  CHECK(ds.channels == c.channels);
  std::set<int> counts;
  for (const Sample& s : ds.samples) {
    const int n = static_cast<int>(s.instances.size());
    CHECK(n >= c.min_instances);
    CHECK(n <= c.max_instances);
    counts.insert(n);
    CHECK(s.image.shape() == ad::Shape{c.channels, c.image_size, c.image_size});
    for (const InstanceAnnotation& inst : s.instances) {
      for (const Keypoint& kp : inst.keypoints) {
        CHECK(kp.x >= 0.0);
        CHECK(kp.x <= c.image_size - 1);
        CHECK(kp.y >= 0.0);
        CHECK(kp.y <= c.image_size - 1);
        CHECK((kp.v == 0 || kp.v == 1));
      }
    }
  }
  CHECK(counts.size() == static_cast<size_t>(c.max_instances - c.min_instances + 1));
  const DatasetStats stats = ComputeStats(ds);
  CHECK(stats.keypoints == ds.num_instances() * c.num_keypoints);
  CHECK(std::abs(stats.visibility_rate() - (1.0 - c.occlusion)) < 0.05);
}

TEST_CASE("no occlusion keeps every keypoint visible") {
  SynthConfig c = SmallSynth();
  c.occlusion = 0.0;
  const Dataset ds = SynthGenerate(c);
  for (const Sample& s : ds.samples) {
    for (const InstanceAnnotation& inst : s.instances) {
      for (const Keypoint& kp : inst.keypoints) CHECK(kp.v == 1);
    }
  }
  CHECK(ComputeStats(ds).visibility_rate() == 1.0);
}

TEST_CASE("rendered blobs sit on visible keypoints only") {
  SynthConfig c = SmallSynth();
  c.num_samples = 100;
  c.max_instances = 1;
  c.channels = c.num_keypoints;
  const Dataset ds = SynthGenerate(c);
  const int size = c.image_size;
  for (const Sample& s : ds.samples) {
    const InstanceAnnotation& inst = s.instances[0];
    for (int j = 0; j < c.num_keypoints; ++j) {
      const Keypoint& kp = inst.keypoints[static_cast<size_t>(j)];
      double best = -1.0;
      int bx = 0, by = 0;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double v = s.image[(static_cast<int64_t>(j) * size + y) * size + x];
          if (v > best) {
            best = v;
            bx = x;
            by = y;
          }
        }
      }
      if (kp.v > 0) {
        CHECK(best > 0.5);
        CHECK(std::abs(bx - kp.x) <= 1.0);
        CHECK(std::abs(by - kp.y) <= 1.0);
      } else {
        CHECK(best == 0.0);
      }
    }
  }
}

TEST_CASE("synthetic configuration validation") {
  SynthConfig c;
  c.max_scale = 40;
  CHECK(CodeOf([&] { SynthGenerate(c); }) == ErrorCode::kInvalidConfig);
  c = SynthConfig{};
  c.min_instances = 3;
  c.max_instances = 2;
  CHECK(CodeOf([&] { c.Validate(); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("synthetic cache roundtrip") {
  testutil::TempDir dir("cache");
  const SynthConfig c = SmallSynth();
  const Dataset ds = SynthGenerate(c);
  const std::string manifest = SaveSynthCache(ds, c, dir.file("s.json"));
  const Dataset back = LoadDataset(manifest);
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.num_keypoints == ds.num_keypoints);
  CHECK(back.channels == ds.channels);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].instances == ds.samples[i].instances);
    CHECK(testutil::BitwiseEqual(back.samples[i].image, ds.samples[i].image));
  }
  SaveSynthCache(ds, c, dir.file("t.json"));
  CHECK(testutil::ReadAll(dir.file("s.bin")) == testutil::ReadAll(dir.file("t.bin")));
}

TEST_CASE("batches") {
  SynthConfig c = SmallSynth();
  c.num_samples = 10;
  const Dataset ds = SynthGenerate(c);
  const auto batches = MakeBatches(ds, 3, 5, 8);
  REQUIRE(batches.size() == 4);
  CHECK(batches[0].samples.size() == 3);
  CHECK(batches[3].samples.size() == 1);
  std::set<int> seen;
  for (const Batch& b : batches) {
    int humans = 0;
    for (size_t i = 0; i < b.samples.size(); ++i) {
      seen.insert(b.samples[i]);
      CHECK(b.targets[i].size() == 8);
      CHECK(b.targets[i].num_humans() ==
            static_cast<int>(ds.samples[static_cast<size_t>(b.samples[i])].instances.size()));
      humans += b.targets[i].num_humans();
    }
    CHECK(b.num_humans == humans);
  }
  CHECK(seen.size() == 10);

  const auto again = MakeBatches(ds, 3, 5, 8);
  for (size_t i = 0; i < batches.size(); ++i) CHECK(again[i].samples == batches[i].samples);
  bool differs = false;
  const auto other = MakeBatches(ds, 3, 6, 8);
  for (size_t i = 0; i < batches.size(); ++i) differs = differs || other[i].samples != batches[i].samples;
  CHECK(differs);
  CHECK(CodeOf([&] { MakeBatches(ds, 0, 1, 8); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("an all-empty batch has no humans") {
  Dataset ds;
  ds.num_keypoints = 2;
  for (int i = 0; i < 3; ++i) ds.samples.push_back(Sample{});
  const auto batches = MakeBatches(ds, 3, 0, 4);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].num_humans == 0);
}
