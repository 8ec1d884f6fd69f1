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

#ifndef POET_DATA_H_
#define POET_DATA_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "poet/pose.h"
#include "poet/tensor.h"

namespace poet {

struct Sample {
  int64_t image_id = 0;
  ImageSize image_size;
  // [C x H x W]; empty when only annotations are available.
  ad::Tensor image;
  std::vector<InstanceAnnotation> instances;
  // Per-instance object area in square pixels, or -1 when unknown.
  std::vector<double> areas;
};

struct Dataset {
  std::vector<Sample> samples;
  int num_keypoints = 0;
  int channels = 0;
  std::vector<std::string> keypoint_names;

  int64_t num_instances() const;
};

// Reads the `images`, `annotations` and (optionally) `categories` arrays of a
// COCO keypoint annotation file. Crowd annotations are skipped; persons with no
// labeled keypoint are kept and encode as non-objects. Throws kParseError with
// the byte offset of malformed JSON and kMissingField with the JSON path of an
// absent field.
Dataset ParseCocoKeypoints(const std::string& json_text);
Dataset LoadCocoKeypoints(const std::string& path);
std::string SerializeCocoKeypoints(const Dataset& dataset);
void SaveCocoKeypoints(const Dataset& dataset, const std::string& path);

// Removes samples without any instance that has a labeled keypoint; returns
// how many were removed.
int DropUnannotated(Dataset& dataset);
// Removes samples with more than `num_slots` human instances; returns how many
// were removed.
int DropOverfull(Dataset& dataset, int num_slots);

struct SynthConfig {
  int num_samples = 2000;
  int image_size = 64;
  int num_keypoints = 5;
  int channels = 5;
  int min_instances = 1;
  int max_instances = 3;
  double occlusion = 0.2;
  // Standard deviation of each rendered Gaussian blob, in pixels.
  double blob_radius = 2.0;
  // Instance half-height range in pixels.
  double min_scale = 8.0;
  double max_scale = 13.0;
  // Per-keypoint jitter as a fraction of the instance scale.
  double jitter = 0.08;
  uint64_t seed = 0;

  void Validate() const;
};

// Each sample draws an instance count, then per instance a scale, a base
// point, and K keypoints jittered around a fixed template. Keypoints are
// occluded (v = 0) with probability `occlusion`, otherwise v = 1. The image has
// one Gaussian blob per visible keypoint in channel (keypoint index mod C).
Dataset SynthGenerate(const SynthConfig& config);

// Writes `<stem>.json` (manifest) and `<stem>.bin` (tensor container). The
// manifest path is returned.
std::string SaveSynthCache(const Dataset& dataset, const SynthConfig& config,
                           const std::string& manifest_path);
Dataset LoadSynthCache(const std::string& manifest_path);

// Loads a synthetic cache manifest or a COCO annotation file, by content.
Dataset LoadDataset(const std::string& path);

struct DatasetStats {
  std::map<int, int> instances_histogram;
  int64_t keypoints = 0;
  int64_t visible_keypoints = 0;

  double visibility_rate() const {
    return keypoints == 0 ? 0.0 : static_cast<double>(visible_keypoints) / keypoints;
  }
};
DatasetStats ComputeStats(const Dataset& dataset);

struct Batch {
  std::vector<int> samples;
  std::vector<TargetSet> targets;
  int num_humans = 0;
};

// Human targets of one sample, padded to `num_slots`.
TargetSet SampleTargets(const Sample& sample, int num_slots, int num_keypoints);

// Shuffles sample order with `shuffle_seed` and cuts consecutive batches; the
// last batch may be partial.
std::vector<Batch> MakeBatches(const Dataset& dataset, int batch_size, uint64_t shuffle_seed,
                               int num_slots);

}  // namespace poet

#endif  // POET_DATA_H_
