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

#include "poet/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#include "poet/error.h"

namespace poet {

namespace {

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void BadValue(const std::string& key, const std::string& value, const char* what) {
  throw Error(ErrorCode::kInvalidConfig, key + ": '" + value + "' is not " + what);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    BadValue(key, value, std::is_floating_point_v<T> ? "a number" : "an integer");
  }
  return out;
}

bool ParseBool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  BadValue(key, value, "a boolean");
}

std::vector<int> ParseIntList(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (value.empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ParseNumber<int>(key, Trim(item)));
  return out;
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string FormatIntList(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
Entry IntEntry(std::string key, Field field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) {
            field(c) = ParseNumber<std::remove_reference_t<decltype(field(c))>>(key, v);
          },
          [field](const RunConfig& c) {
            return std::to_string(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename Field>
Entry DoubleEntry(std::string key, Field field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) { field(c) = ParseNumber<double>(key, v); },
          [field](const RunConfig& c) { return FormatDouble(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
Entry BoolEntry(std::string key, Field field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = ParseBool(key, v); },
          [field](const RunConfig& c) {
            return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Field>
Entry StringEntry(std::string key, Field field) {
  return {key, [field](RunConfig& c, const std::string& v) { field(c) = v; },
          [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); }};
}

template <typename Field>
Entry ListEntry(std::string key, Field field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = ParseIntList(key, v); },
          [field](const RunConfig& c) { return FormatIntList(field(const_cast<RunConfig&>(c))); }};
}

#define POET_FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& Entries() {
  static const std::vector<Entry> entries = {
      IntEntry("run.seed", POET_FIELD(seed)),
      StringEntry("run.out_dir", POET_FIELD(out_dir)),

      IntEntry("model.d_model", POET_FIELD(model.d_model)),
      IntEntry("model.enc_layers", POET_FIELD(model.enc_layers)),
      IntEntry("model.dec_layers", POET_FIELD(model.dec_layers)),
      IntEntry("model.heads", POET_FIELD(model.heads)),
      IntEntry("model.num_queries", POET_FIELD(model.num_queries)),
      ListEntry("model.backbone_channels", POET_FIELD(model.backbone_channels)),
      ListEntry("model.backbone_strides", POET_FIELD(model.backbone_strides)),
      DoubleEntry("model.dropout", POET_FIELD(model.dropout)),
      IntEntry("model.ffn_hidden", POET_FIELD(model.ffn_hidden)),
      IntEntry("model.dim_feedforward", POET_FIELD(model.dim_feedforward)),

      DoubleEntry("loss.lambda_l1", POET_FIELD(loss.lambda_l1)),
      DoubleEntry("loss.lambda_l2", POET_FIELD(loss.lambda_l2)),
      DoubleEntry("loss.lambda_ctr", POET_FIELD(loss.lambda_ctr)),
      DoubleEntry("loss.nonobject_class_weight", POET_FIELD(loss.nonobject_class_weight)),

      DoubleEntry("optimizer.lr_transformer", POET_FIELD(optimizer.lr_transformer)),
      DoubleEntry("optimizer.lr_backbone", POET_FIELD(optimizer.lr_backbone)),
      DoubleEntry("optimizer.weight_decay", POET_FIELD(optimizer.weight_decay)),
      DoubleEntry("optimizer.beta1", POET_FIELD(optimizer.beta1)),
      DoubleEntry("optimizer.beta2", POET_FIELD(optimizer.beta2)),
      DoubleEntry("optimizer.eps", POET_FIELD(optimizer.eps)),

      IntEntry("schedule.epochs", POET_FIELD(schedule.total_epochs)),
      ListEntry("schedule.drop_epochs", POET_FIELD(schedule.drop_epochs)),
      DoubleEntry("schedule.drop_factor", POET_FIELD(schedule.drop_factor)),

      IntEntry("train.batch_size", POET_FIELD(train.batch_size)),
      IntEntry("train.threads", POET_FIELD(train.threads)),
      DoubleEntry("train.clip_norm", POET_FIELD(train.clip_norm)),
      BoolEntry("train.aux_loss", POET_FIELD(train.aux_loss)),
      IntEntry("train.checkpoint_every", POET_FIELD(train.checkpoint_every)),
      IntEntry("train.eval_every", POET_FIELD(train.eval_every)),
      DoubleEntry("train.score_threshold", POET_FIELD(train.score_threshold)),
      IntEntry("train.top_k", POET_FIELD(train.top_k)),

      StringEntry("data.train", POET_FIELD(data.train)),
      StringEntry("data.val", POET_FIELD(data.val)),
      IntEntry("data.val_samples", POET_FIELD(data.val_samples)),
      BoolEntry("data.drop_overfull", POET_FIELD(data.drop_overfull)),

      IntEntry("synth.samples", POET_FIELD(synth.num_samples)),
      IntEntry("synth.image_size", POET_FIELD(synth.image_size)),
      IntEntry("synth.num_keypoints", POET_FIELD(synth.num_keypoints)),
      IntEntry("synth.channels", POET_FIELD(synth.channels)),
      IntEntry("synth.min_instances", POET_FIELD(synth.min_instances)),
      IntEntry("synth.max_instances", POET_FIELD(synth.max_instances)),
      DoubleEntry("synth.occlusion", POET_FIELD(synth.occlusion)),
      DoubleEntry("synth.blob_radius", POET_FIELD(synth.blob_radius)),
      DoubleEntry("synth.min_scale", POET_FIELD(synth.min_scale)),
      DoubleEntry("synth.max_scale", POET_FIELD(synth.max_scale)),
      DoubleEntry("synth.jitter", POET_FIELD(synth.jitter)),
      IntEntry("synth.seed", POET_FIELD(synth.seed)),
  };
  return entries;
}

#undef POET_FIELD

const Entry* FindEntry(const std::string& key) {
  for (const Entry& e : Entries()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

}  // namespace

void RunConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  model.Validate();
  schedule.Validate();
  if (loss.lambda_l1 < 0 || loss.lambda_l2 < 0 || loss.lambda_ctr < 0) {
    fail("loss weights must be non-negative");
  }
  if (!(loss.nonobject_class_weight > 0)) fail("loss.nonobject_class_weight must be > 0");
  if (optimizer.lr_transformer < 0 || optimizer.lr_backbone < 0) fail("learning rates must be >= 0");
  if (optimizer.weight_decay < 0) fail("optimizer.weight_decay must be >= 0");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
    fail("optimizer betas must lie in [0, 1)");
  }
  if (!(optimizer.eps > 0)) fail("optimizer.eps must be > 0");
  if (train.batch_size < 1) fail("train.batch_size must be >= 1");
  if (train.threads < 1) fail("train.threads must be >= 1");
  if (train.checkpoint_every < 0 || train.eval_every < 0) fail("train intervals must be >= 0");
  if (train.top_k < 0) fail("train.top_k must be >= 0");
  if (data.val_samples < 0) fail("data.val_samples must be >= 0");
  if (data.train.empty()) {
    synth.Validate();
    if (synth.max_instances > model.num_queries && !data.drop_overfull) {
      fail("synth.max_instances (" + std::to_string(synth.max_instances) +
           ") exceeds model.num_queries (" + std::to_string(model.num_queries) + ")");
    }
  }
}

void SetConfigValue(RunConfig& config, const std::string& key, const std::string& value) {
  const Entry* entry = FindEntry(key);
  if (!entry) throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "'");
  entry->set(config, value);
}

void ApplyOverride(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::kParseError, "override '" + assignment + "' is not key=value");
  }
  SetConfigValue(config, Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

RunConfig ParseRunConfig(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      SetConfigValue(base, Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.message());
    }
  }
  return base;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw Error(ErrorCode::kIoError, "cannot open config " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return ParseRunConfig(buffer.str());
}

std::string DumpRunConfig(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const Entry& e : Entries()) {
    const std::string s = e.key.substr(0, e.key.find('.'));
    if (s != section) {
      if (!section.empty()) out += "\n";
      section = s;
    }
    out += e.key + " = " + e.get(config) + "\n";
  }
  return out;
}

std::vector<std::string> RunConfigKeys() {
  std::vector<std::string> keys;
  for (const Entry& e : Entries()) keys.push_back(e.key);
  return keys;
}

}  // namespace poet
