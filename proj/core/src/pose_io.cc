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

#include "poet/pose_io.h"

#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "poet/error.h"

namespace poet {

using nlohmann::json;

namespace {

json Parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError,
                "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

const json& Field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kMissingField, path + "." + key);
  }
  return obj.at(key);
}

std::vector<double> Numbers(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw Error(ErrorCode::kParseError, path + " is not an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const json& v : arr) {
    if (!v.is_number()) throw Error(ErrorCode::kParseError, path + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

std::optional<int64_t> ImageId(const json& root) {
  if (root.contains("image_id") && root["image_id"].is_number_integer()) {
    return root["image_id"].get<int64_t>();
  }
  return std::nullopt;
}

int KeypointsOf(const std::vector<double>& flat, const std::string& path) {
  if (flat.size() < 5 || (flat.size() - 2) % 3 != 0) {
    throw Error(ErrorCode::kSizeMismatch,
                path + " has " + std::to_string(flat.size()) + " values; expected 2 + 3K");
  }
  return static_cast<int>((flat.size() - 2) / 3);
}

json PoseJson(const PoseVector& pose) { return FlattenPose(pose); }

template <typename Record, typename ParseFn>
std::vector<Record> ReadLines(const std::string& path, ParseFn parse) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::vector<Record> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(parse(line));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.message());
    }
  }
  return records;
}

}  // namespace

TargetRecord ParseTargetLine(const std::string& line) {
  const json root = Parse(line);
  const json& items = Field(root, "targets", "$");
  if (!items.is_array()) throw Error(ErrorCode::kParseError, "$.targets is not an array");
  TargetRecord rec;
  rec.image_id = ImageId(root);
  int k = -1;
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string path = "$.targets[" + std::to_string(i) + "]";
    const std::vector<double> flat = Numbers(Field(items[i], "pose", path), path + ".pose");
    const int this_k = KeypointsOf(flat, path + ".pose");
    if (k >= 0 && this_k != k) throw Error(ErrorCode::kSizeMismatch, path + ".pose changes K");
    k = this_k;
    const json& cls = Field(items[i], "class", path);
    if (!cls.is_number_integer() || (cls.get<int>() != 0 && cls.get<int>() != 1)) {
      throw Error(ErrorCode::kParseError, path + ".class must be 0 or 1");
    }
    const PoseClass c = cls.get<int>() == 0 ? PoseClass::kHuman : PoseClass::kNonObject;
    rec.targets.slots.push_back(c == PoseClass::kHuman ? UnflattenPose(flat, c) : NonObjectPose(k));
  }
  return rec;
}

PredictionRecord ParsePredictionLine(const std::string& line) {
  const json root = Parse(line);
  const json& items = Field(root, "preds", "$");
  if (!items.is_array()) throw Error(ErrorCode::kParseError, "$.preds is not an array");
  PredictionRecord rec;
  rec.image_id = ImageId(root);
  int k = -1;
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string path = "$.preds[" + std::to_string(i) + "]";
    const std::vector<double> flat = Numbers(Field(items[i], "pose", path), path + ".pose");
    const int this_k = KeypointsOf(flat, path + ".pose");
    if (k >= 0 && this_k != k) throw Error(ErrorCode::kSizeMismatch, path + ".pose changes K");
    k = this_k;
    const std::vector<double> probs = Numbers(Field(items[i], "probs", path), path + ".probs");
    if (probs.size() != 2 || probs[0] < 0 || probs[1] < 0) {
      throw Error(ErrorCode::kParseError, path + ".probs must be [p_human, p_none] with p >= 0");
    }
    PredictionSlot slot;
    slot.class_probs = {probs[0], probs[1]};
    slot.class_logits = {std::log(std::max(probs[0], 1e-300)), std::log(std::max(probs[1], 1e-300))};
    slot.pose = UnflattenPose(flat, probs[0] >= probs[1] ? PoseClass::kHuman : PoseClass::kNonObject);
    rec.preds.push_back(std::move(slot));
  }
  return rec;
}

std::string FormatTargetLine(const TargetRecord& record) {
  json items = json::array();
  for (const PoseVector& p : record.targets.slots) {
    items.push_back({{"pose", PoseJson(p)}, {"class", p.is_human() ? 0 : 1}});
  }
  json root = {{"targets", items}};
  if (record.image_id) root["image_id"] = *record.image_id;
  return root.dump();
}

std::string FormatPredictionLine(const PredictionRecord& record) {
  json items = json::array();
  for (const PredictionSlot& s : record.preds) {
    items.push_back({{"pose", PoseJson(s.pose)}, {"probs", {s.class_probs[0], s.class_probs[1]}}});
  }
  json root = {{"preds", items}};
  if (record.image_id) root["image_id"] = *record.image_id;
  return root.dump();
}

std::vector<TargetRecord> ReadTargetsJsonl(const std::string& path) {
  return ReadLines<TargetRecord>(path, ParseTargetLine);
}

std::vector<PredictionRecord> ReadPredictionsJsonl(const std::string& path) {
  return ReadLines<PredictionRecord>(path, ParsePredictionLine);
}

std::vector<std::vector<ScoredPose>> ParseCocoResults(const std::string& json_text,
                                                      const std::vector<int64_t>& image_ids) {
  const json root = Parse(json_text);
  if (!root.is_array()) throw Error(ErrorCode::kParseError, "results must be a JSON array");
  std::map<int64_t, size_t> index;
  for (size_t i = 0; i < image_ids.size(); ++i) index[image_ids[i]] = i;
  std::vector<std::vector<ScoredPose>> dets(image_ids.size());
  for (size_t i = 0; i < root.size(); ++i) {
    const std::string path = "$[" + std::to_string(i) + "]";
    const int64_t id = Field(root[i], "image_id", path).get<int64_t>();
    const auto it = index.find(id);
    if (it == index.end()) {
      throw Error(ErrorCode::kParseError, path + ".image_id " + std::to_string(id) + " is not in the dataset");
    }
    const std::vector<double> kps = Numbers(Field(root[i], "keypoints", path), path + ".keypoints");
    if (kps.empty() || kps.size() % 3 != 0) {
      throw Error(ErrorCode::kSizeMismatch, path + ".keypoints must hold (x, y, v) triplets");
    }
    ScoredPose det;
    det.score = Field(root[i], "score", path).get<double>();
    for (size_t j = 0; j < kps.size(); j += 3) {
      det.keypoints.push_back({kps[j], kps[j + 1], static_cast<int>(kps[j + 2])});
    }
    dets[it->second].push_back(std::move(det));
  }
  return dets;
}

}  // namespace poet
