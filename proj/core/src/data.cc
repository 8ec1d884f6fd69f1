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

#include "poet/data.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "poet/checkpoint.h"
#include "poet/error.h"
#include "poet/random.h"

namespace poet {

using nlohmann::json;

int64_t Dataset::num_instances() const {
  int64_t n = 0;
  for (const Sample& s : samples) n += static_cast<int64_t>(s.instances.size());
  return n;
}

namespace {

std::string ReadFile(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return buffer.str();
}

void WriteFile(const std::string& path, const std::string& contents) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  file.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!file) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

json ParseJson(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError,
                "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

const json& Field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kMissingField, path + "." + key);
  }
  return obj.at(key);
}

double Number(const json& value, const std::string& path) {
  if (!value.is_number()) throw Error(ErrorCode::kParseError, path + " is not a number");
  return value.get<double>();
}

bool HasLabeledKeypoint(const InstanceAnnotation& ann) {
  return std::any_of(ann.keypoints.begin(), ann.keypoints.end(),
                     [](const Keypoint& k) { return k.v > 0; });
}

}  // namespace

Dataset ParseCocoKeypoints(const std::string& json_text) {
  const json root = ParseJson(json_text);
  const json& images = Field(root, "images", "$");
  const json& annotations = Field(root, "annotations", "$");
  if (!images.is_array()) throw Error(ErrorCode::kParseError, "$.images is not an array");
  if (!annotations.is_array()) throw Error(ErrorCode::kParseError, "$.annotations is not an array");

  Dataset ds;
  if (root.contains("categories") && root["categories"].is_array()) {
    for (const json& cat : root["categories"]) {
      if (cat.contains("keypoints") && cat["keypoints"].is_array()) {
        for (const json& name : cat["keypoints"]) ds.keypoint_names.push_back(name.get<std::string>());
        ds.num_keypoints = static_cast<int>(ds.keypoint_names.size());
        break;
      }
    }
  }

  std::map<int64_t, size_t> index_of;
  for (size_t i = 0; i < images.size(); ++i) {
    const std::string path = "$.images[" + std::to_string(i) + "]";
    const json& img = images[i];
    Sample s;
    s.image_id = Field(img, "id", path).get<int64_t>();
    s.image_size = {Number(Field(img, "width", path), path + ".width"),
                    Number(Field(img, "height", path), path + ".height")};
    index_of[s.image_id] = ds.samples.size();
    ds.samples.push_back(std::move(s));
  }

  for (size_t i = 0; i < annotations.size(); ++i) {
    const std::string path = "$.annotations[" + std::to_string(i) + "]";
    const json& ann = annotations[i];
    if (ann.contains("iscrowd") && ann["iscrowd"].is_number() && ann["iscrowd"].get<int>() != 0) {
      continue;
    }
    const int64_t image_id = Field(ann, "image_id", path).get<int64_t>();
    auto it = index_of.find(image_id);
    if (it == index_of.end()) {
      throw Error(ErrorCode::kParseError,
                  path + ".image_id " + std::to_string(image_id) + " names no image");
    }
    const json& kps = Field(ann, "keypoints", path);
    if (!kps.is_array() || kps.size() % 3 != 0 || kps.empty()) {
      throw Error(ErrorCode::kParseError, path + ".keypoints must hold (x, y, v) triplets");
    }
    const int k = static_cast<int>(kps.size() / 3);
    if (ds.num_keypoints == 0) ds.num_keypoints = k;
    if (k != ds.num_keypoints) {
      throw Error(ErrorCode::kSizeMismatch, path + ".keypoints has " + std::to_string(k) +
                                                " keypoints, expected " +
                                                std::to_string(ds.num_keypoints));
    }
    Sample& s = ds.samples[it->second];
    InstanceAnnotation inst;
    inst.image_size = s.image_size;
    for (int j = 0; j < k; ++j) {
      const std::string kp_path = path + ".keypoints[" + std::to_string(3 * j) + "]";
      inst.keypoints.push_back({Number(kps[static_cast<size_t>(3 * j)], kp_path),
                                Number(kps[static_cast<size_t>(3 * j + 1)], kp_path),
                                static_cast<int>(Number(kps[static_cast<size_t>(3 * j + 2)], kp_path))});
    }
    s.instances.push_back(std::move(inst));
    s.areas.push_back(ann.contains("area") && ann["area"].is_number() ? ann["area"].get<double>()
                                                                      : -1.0);
  }
  return ds;
}

Dataset LoadCocoKeypoints(const std::string& path) { return ParseCocoKeypoints(ReadFile(path)); }

std::string SerializeCocoKeypoints(const Dataset& dataset) {
  json images = json::array();
  json annotations = json::array();
  int64_t ann_id = 1;
  for (const Sample& s : dataset.samples) {
    images.push_back({{"id", s.image_id}, {"width", s.image_size.width}, {"height", s.image_size.height}});
    for (size_t i = 0; i < s.instances.size(); ++i) {
      const InstanceAnnotation& inst = s.instances[i];
      json kps = json::array();
      int labeled = 0;
      for (const Keypoint& kp : inst.keypoints) {
        kps.push_back(kp.x);
        kps.push_back(kp.y);
        kps.push_back(kp.v);
        if (kp.v > 0) ++labeled;
      }
      json a = {{"id", ann_id++},       {"image_id", s.image_id}, {"category_id", 1},
                {"keypoints", kps},     {"num_keypoints", labeled}, {"iscrowd", 0}};
      if (i < s.areas.size() && s.areas[i] >= 0.0) a["area"] = s.areas[i];
      annotations.push_back(std::move(a));
    }
  }
  json category = {{"id", 1}, {"name", "person"}};
  if (!dataset.keypoint_names.empty()) category["keypoints"] = dataset.keypoint_names;
  json root = {{"images", images}, {"annotations", annotations}, {"categories", json::array({category})}};
  return root.dump();
}

void SaveCocoKeypoints(const Dataset& dataset, const std::string& path) {
  WriteFile(path, SerializeCocoKeypoints(dataset));
}

int DropUnannotated(Dataset& dataset) {
  const size_t before = dataset.samples.size();
  std::erase_if(dataset.samples, [](const Sample& s) {
    return std::none_of(s.instances.begin(), s.instances.end(), HasLabeledKeypoint);
  });
  return static_cast<int>(before - dataset.samples.size());
}

int DropOverfull(Dataset& dataset, int num_slots) {
  const size_t before = dataset.samples.size();
  std::erase_if(dataset.samples, [num_slots](const Sample& s) {
    return std::count_if(s.instances.begin(), s.instances.end(), HasLabeledKeypoint) > num_slots;
  });
  return static_cast<int>(before - dataset.samples.size());
}

void SynthConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, "synth: " + msg); };
  if (num_samples < 1) fail("num_samples must be >= 1");
  if (image_size < 8) fail("image_size must be >= 8");
  if (num_keypoints < 1) fail("num_keypoints must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (min_instances < 0 || max_instances < min_instances) fail("need 0 <= min_instances <= max_instances");
  if (!(occlusion >= 0.0 && occlusion <= 1.0)) fail("occlusion must be in [0, 1]");
  if (!(blob_radius > 0.0)) fail("blob_radius must be > 0");
  if (!(min_scale > 0.0 && max_scale >= min_scale)) fail("need 0 < min_scale <= max_scale");
  if (2.2 * max_scale + 4.0 > image_size) fail("instances do not fit the image");
  if (jitter < 0.0) fail("jitter must be >= 0");
}

namespace {

// Template in units of the instance scale; y grows downward.
std::vector<Point2> PoseTemplate(int k) {
  if (k == 5) {
    // head, left hand, right hand, left foot, right foot
    return {{0.0, -1.0}, {-0.9, -0.15}, {0.9, -0.15}, {-0.45, 1.0}, {0.45, 1.0}};
  }
  std::vector<Point2> t;
  for (int i = 0; i < k; ++i) {
    const double a = 2.0 * std::numbers::pi * i / k;
    t.push_back({0.9 * std::sin(a), -std::cos(a)});
  }
  return t;
}

}  // namespace

Dataset SynthGenerate(const SynthConfig& config) {
  config.Validate();
  const int size = config.image_size;
  const int k = config.num_keypoints;
  const std::vector<Point2> tmpl = PoseTemplate(k);
  Rng rng(config.seed);

  Dataset ds;
  ds.num_keypoints = k;
  ds.channels = config.channels;
  for (int i = 0; i < k; ++i) ds.keypoint_names.push_back("kp" + std::to_string(i));

  const double two_r2 = 2.0 * config.blob_radius * config.blob_radius;
  const int reach = static_cast<int>(std::ceil(3.0 * config.blob_radius));
  for (int n = 0; n < config.num_samples; ++n) {
    Sample s;
    s.image_id = n;
    s.image_size = {static_cast<double>(size), static_cast<double>(size)};
    s.image = ad::Tensor({config.channels, size, size});
    const int count = rng.UniformInt(config.min_instances, config.max_instances);
    std::vector<std::pair<Point2, double>> placed;
    for (int inst = 0; inst < count; ++inst) {
      const double scale = rng.Uniform(config.min_scale, config.max_scale);
      const double margin = 1.1 * scale + 2.0;
      Point2 base;
      // Rejection sampling keeps instances mostly apart; after enough tries the
      // last draw is accepted.
      for (int attempt = 0; attempt < 50; ++attempt) {
        base = {rng.Uniform(margin, size - margin), rng.Uniform(margin, size - margin)};
        bool clear = true;
        for (const auto& [other, other_scale] : placed) {
          const double dx = base.x - other.x, dy = base.y - other.y;
          const double min_dist = 0.9 * (scale + other_scale);
          if (dx * dx + dy * dy < min_dist * min_dist) clear = false;
        }
        if (clear) break;
      }
      placed.push_back({base, scale});

      InstanceAnnotation ann;
      ann.image_size = s.image_size;
      for (int j = 0; j < k; ++j) {
        const Point2& t = tmpl[static_cast<size_t>(j)];
        Keypoint kp;
        kp.x = std::clamp(base.x + scale * (t.x + config.jitter * rng.Normal()), 0.0, size - 1.0);
        kp.y = std::clamp(base.y + scale * (t.y + config.jitter * rng.Normal()), 0.0, size - 1.0);
        kp.v = rng.Bernoulli(config.occlusion) ? 0 : 1;
        ann.keypoints.push_back(kp);
      }
      for (int j = 0; j < k; ++j) {
        const Keypoint& kp = ann.keypoints[static_cast<size_t>(j)];
        if (kp.v == 0) continue;
        const int c = j % config.channels;
        const int x0 = std::max(0, static_cast<int>(kp.x) - reach);
        const int x1 = std::min(size - 1, static_cast<int>(kp.x) + reach + 1);
        const int y0 = std::max(0, static_cast<int>(kp.y) - reach);
        const int y1 = std::min(size - 1, static_cast<int>(kp.y) + reach + 1);
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const double dx = x - kp.x, dy = y - kp.y;
            double& px = s.image[(static_cast<int64_t>(c) * size + y) * size + x];
            px = std::max(px, std::exp(-(dx * dx + dy * dy) / two_r2));
          }
        }
      }
      s.instances.push_back(std::move(ann));
      s.areas.push_back(-1.0);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

namespace {

json SynthConfigJson(const SynthConfig& c) {
  return {{"num_samples", c.num_samples}, {"image_size", c.image_size},
          {"num_keypoints", c.num_keypoints}, {"channels", c.channels},
          {"min_instances", c.min_instances}, {"max_instances", c.max_instances},
          {"occlusion", c.occlusion},     {"blob_radius", c.blob_radius},
          {"min_scale", c.min_scale},     {"max_scale", c.max_scale},
          {"jitter", c.jitter},           {"seed", c.seed}};
}

std::string SampleKey(size_t i, const char* what) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "sample.%06zu.%s", i, what);
  return buf;
}

}  // namespace

std::string SaveSynthCache(const Dataset& dataset, const SynthConfig& config,
                           const std::string& manifest_path) {
  namespace fs = std::filesystem;
  fs::path manifest(manifest_path);
  fs::path data = manifest;
  data.replace_extension(".bin");

  std::vector<NamedTensor> tensors;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    tensors.push_back({SampleKey(i, "image"), s.image});
    ad::Tensor kps({static_cast<int64_t>(s.instances.size()), dataset.num_keypoints, 3});
    for (size_t a = 0; a < s.instances.size(); ++a) {
      for (int j = 0; j < dataset.num_keypoints; ++j) {
        const Keypoint& kp = s.instances[a].keypoints[static_cast<size_t>(j)];
        const int64_t base = (static_cast<int64_t>(a) * dataset.num_keypoints + j) * 3;
        kps[base] = kp.x;
        kps[base + 1] = kp.y;
        kps[base + 2] = kp.v;
      }
    }
    tensors.push_back({SampleKey(i, "keypoints"), std::move(kps)});
  }
  WriteCheckpoint(data.string(), tensors);

  const DatasetStats stats = ComputeStats(dataset);
  json hist = json::object();
  for (const auto& [n, c] : stats.instances_histogram) hist[std::to_string(n)] = c;
  json root = {{"format", "poet-synth-v1"},
               {"data_file", data.filename().string()},
               {"config", SynthConfigJson(config)},
               {"num_samples", dataset.samples.size()},
               {"num_keypoints", dataset.num_keypoints},
               {"channels", dataset.channels},
               {"image_size", config.image_size},
               {"stats", {{"instances_histogram", hist}, {"visibility_rate", stats.visibility_rate()}}}};
  WriteFile(manifest.string(), root.dump(2) + "\n");
  return manifest.string();
}

Dataset LoadSynthCache(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const json root = ParseJson(ReadFile(manifest_path));
  if (Field(root, "format", "$").get<std::string>() != "poet-synth-v1") {
    throw Error(ErrorCode::kParseError, manifest_path + " is not a synthetic dataset manifest");
  }
  const fs::path data =
      fs::path(manifest_path).parent_path() / Field(root, "data_file", "$").get<std::string>();
  const std::vector<NamedTensor> tensors = ReadCheckpoint(data.string());
  Dataset ds;
  ds.num_keypoints = Field(root, "num_keypoints", "$").get<int>();
  ds.channels = Field(root, "channels", "$").get<int>();
  const int size = Field(root, "image_size", "$").get<int>();
  const size_t n = Field(root, "num_samples", "$").get<size_t>();
  for (int i = 0; i < ds.num_keypoints; ++i) ds.keypoint_names.push_back("kp" + std::to_string(i));
  for (size_t i = 0; i < n; ++i) {
    const NamedTensor* image = FindTensor(tensors, SampleKey(i, "image"));
    const NamedTensor* kps = FindTensor(tensors, SampleKey(i, "keypoints"));
    if (!image || !kps) throw Error(ErrorCode::kMissingField, "cache lacks sample " + std::to_string(i));
    Sample s;
    s.image_id = static_cast<int64_t>(i);
    s.image_size = {static_cast<double>(size), static_cast<double>(size)};
    s.image = image->value;
    const int64_t count = kps->value.dim(0);
    for (int64_t a = 0; a < count; ++a) {
      InstanceAnnotation ann;
      ann.image_size = s.image_size;
      for (int j = 0; j < ds.num_keypoints; ++j) {
        const int64_t base = (a * ds.num_keypoints + j) * 3;
        ann.keypoints.push_back(
            {kps->value[base], kps->value[base + 1], static_cast<int>(kps->value[base + 2])});
      }
      s.instances.push_back(std::move(ann));
      s.areas.push_back(-1.0);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset LoadDataset(const std::string& path) {
  const std::string text = ReadFile(path);
  const json root = ParseJson(text);
  if (root.is_object() && root.contains("format")) return LoadSynthCache(path);
  return ParseCocoKeypoints(text);
}

DatasetStats ComputeStats(const Dataset& dataset) {
  DatasetStats stats;
  for (const Sample& s : dataset.samples) {
    stats.instances_histogram[static_cast<int>(s.instances.size())] += 1;
    for (const InstanceAnnotation& a : s.instances) {
      for (const Keypoint& kp : a.keypoints) {
        ++stats.keypoints;
        if (kp.v > 0) ++stats.visible_keypoints;
      }
    }
  }
  return stats;
}

TargetSet SampleTargets(const Sample& sample, int num_slots, int num_keypoints) {
  std::vector<PoseVector> humans;
  for (const InstanceAnnotation& a : sample.instances) {
    PoseVector p = EncodePose(a);
    if (p.is_human()) humans.push_back(std::move(p));
  }
  return PadTargets(humans, num_slots, num_keypoints);
}

std::vector<Batch> MakeBatches(const Dataset& dataset, int batch_size, uint64_t shuffle_seed,
                               int num_slots) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  std::vector<int> order(dataset.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(shuffle_seed);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.UniformInt(0, static_cast<int>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    Batch b;
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    for (size_t i = start; i < end; ++i) {
      const Sample& s = dataset.samples[static_cast<size_t>(order[i])];
      b.samples.push_back(order[i]);
      b.targets.push_back(SampleTargets(s, num_slots, dataset.num_keypoints));
      b.num_humans += b.targets.back().num_humans();
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace poet
