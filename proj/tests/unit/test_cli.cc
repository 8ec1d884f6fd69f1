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


#include <filesystem>
#include <sstream>

#include "cli.h"
#include "doctest.h"
#include "json.hpp"
#include "poet/pose_io.h"
#include "test_util.h"

using namespace poet;
using testutil::ReadAll;
using testutil::TempDir;
using testutil::WriteAll;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result RunCli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::Run(args, out, err);
  return {code, out.str(), err.str()};
}

bool Contains(const std::string& text, const std::string& part) {
  return text.find(part) != std::string::npos;
}

const char kTinyConfig[] = R"(run.seed = 5
model.d_model = 16
model.enc_layers = 1
model.dec_layers = 2
model.heads = 2
model.num_queries = 4
model.backbone_channels = 4,8
model.backbone_strides = 2,2
model.ffn_hidden = 12
model.dim_feedforward = 20
schedule.epochs = 1
schedule.drop_epochs =
train.batch_size = 4
data.val_samples = 4
synth.samples = 8
synth.image_size = 16
synth.num_keypoints = 3
synth.channels = 3
synth.min_instances = 0
synth.max_instances = 2
synth.min_scale = 3
synth.max_scale = 5
synth.blob_radius = 1
)";

void WriteMatchFiles(const TempDir& dir, double offset) {
  TargetRecord t;
  PoseVector a = NonObjectPose(1);
  a.cls = PoseClass::kHuman;
  a.center = {0.2, 0.2};
  a.visibilities = {1.0};
  PoseVector b = a;
  b.center = {0.8, 0.8};
  t.targets.slots = {a, b};
  PredictionRecord p;
  for (const PoseVector& pose : {b, a}) {
    PredictionSlot slot;
    slot.class_probs = {0.9, 0.1};
    slot.pose = pose;
    slot.pose.center.x += offset;
    p.preds.push_back(slot);
  }
  WriteAll(dir.file("t.jsonl"), FormatTargetLine(t) + "\n");
  WriteAll(dir.file("p.jsonl"), FormatPredictionLine(p) + "\n");
}

}  // namespace

TEST_CASE("version and usage") {
  const Result v = RunCli({"--version"});
  CHECK(v.code == cli::kExitOk);
  CHECK(Contains(v.out, "poet 0.1.0"));
  CHECK(RunCli({}).code == cli::kExitUsage);
  CHECK(RunCli({"bogus"}).code == cli::kExitUsage);
  CHECK(RunCli({"train", "--no-such-flag"}).code == cli::kExitUsage);
  CHECK(RunCli({"--help"}).code == cli::kExitOk);
}

TEST_CASE("match reports the optimal assignment") {
  TempDir dir("cli_match");
  WriteMatchFiles(dir, 0.0);
  const Result r = RunCli({"match", dir.file("t.jsonl"), dir.file("p.jsonl"), "--oracle"});
  CHECK(r.code == cli::kExitOk);
  CHECK(Contains(r.out, "target 0 -> prediction 1"));
  CHECK(Contains(r.out, "target 1 -> prediction 0"));
  CHECK(Contains(r.out, "oracle OK"));

  const Result csv = RunCli({"match", dir.file("t.jsonl"), dir.file("p.jsonl"), "--csv"});
  CHECK(csv.code == cli::kExitOk);
  CHECK(csv.out.starts_with("record,target,prediction,cost\n1,0,1,"));
}

TEST_CASE("match input errors") {
  TempDir dir("cli_match_err");
  WriteMatchFiles(dir, 0.0);
  WriteAll(dir.file("two.jsonl"), ReadAll(dir.file("p.jsonl")) + ReadAll(dir.file("p.jsonl")));
  CHECK(RunCli({"match", dir.file("t.jsonl"), dir.file("two.jsonl")}).code == cli::kExitUsage);
  WriteAll(dir.file("bad.jsonl"), "{oops\n");
  const Result bad = RunCli({"match", dir.file("t.jsonl"), dir.file("bad.jsonl")});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(Contains(bad.err, "error:"));
  CHECK(RunCli({"match", dir.file("t.jsonl"), dir.file("missing.jsonl")}).code == cli::kExitFailure);
}

TEST_CASE("gradcheck passes and detects a corrupted backward rule") {
  const Result ok = RunCli({"gradcheck", "--component", "loss", "--instances", "5"});
  CHECK(ok.code == cli::kExitOk);
  CHECK(Contains(ok.out, "PASS"));
  const Result bad = RunCli({"gradcheck", "--component", "ops", "--corrupt-backward"});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(Contains(bad.out, "FAIL"));
  CHECK(Contains(bad.err, "ops"));
}

TEST_CASE("synth writes a cache") {
  TempDir dir("cli_synth");
  const Result r = RunCli({"synth", "--samples", "10", "--out",
                           dir.file("sub/s.json")});
  CHECK(r.code == cli::kExitOk);
  CHECK(Contains(r.out, "samples: 10"));
  CHECK(std::filesystem::exists(dir.file("sub/s.json")));
  CHECK(std::filesystem::exists(dir.file("sub/s.bin")));
  CHECK(RunCli({"synth", "--samples", "0", "--out", dir.file("z.json")}).code == cli::kExitUsage);
}

TEST_CASE("train then evaluate") {
  TempDir dir("cli_train");
  WriteAll(dir.file("tiny.cfg"), kTinyConfig);
  const Result bad = RunCli({"train", "--config", dir.file("tiny.cfg"), "--set", "model.heads=3"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(RunCli({"train", "--config", dir.file("tiny.cfg"), "--set", "no.such=1"}).code ==
        cli::kExitUsage);
  CHECK(RunCli({"train", "--config", dir.file("missing.cfg")}).code == cli::kExitFailure);

  const Result t = RunCli({"train", "--config", dir.file("tiny.cfg"), "--out-dir", dir.file("run")});
  REQUIRE(t.code == cli::kExitOk);
  const std::string ckpt = dir.file("run/epoch_0001.ckpt");
  CHECK(Contains(t.out, ckpt));

  const Result e = RunCli({"eval", "--checkpoint", ckpt, "--per-layer", "--json", dir.file("e.json")});
  CHECK(e.code == cli::kExitOk);
  CHECK(Contains(e.out, "AP50"));
  CHECK(Contains(e.out, "layer 2"));
  const nlohmann::json j = nlohmann::json::parse(ReadAll(dir.file("e.json")));
  CHECK(j["epoch"] == 1);
  CHECK(j["per_layer"].size() == 2);

  CHECK(RunCli({"eval"}).code == cli::kExitUsage);
}
