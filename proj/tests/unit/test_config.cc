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


#include <string>

#include "doctest.h"
#include "poet/config.h"
#include "poet/error.h"
#include "test_util.h"

using namespace poet;
using testutil::CodeOf;

namespace {

const char* kDefaultSnapshot = R"(
run.seed = 0
run.out_dir = run

model.d_model = 256
model.enc_layers = 6
model.dec_layers = 6
model.heads = 8
model.num_queries = 25
model.backbone_channels = 64,128,256
model.backbone_strides = 2,2,2
model.dropout = 0.1
model.ffn_hidden = 256
model.dim_feedforward = 2048

loss.lambda_l1 = 4
loss.lambda_l2 = 0.2
loss.lambda_ctr = 0.5
loss.nonobject_class_weight = 0.1

optimizer.lr_transformer = 1e-04
optimizer.lr_backbone = 1e-05
optimizer.weight_decay = 1e-04
optimizer.beta1 = 0.9
optimizer.beta2 = 0.999
optimizer.eps = 1e-08

schedule.epochs = 300
schedule.drop_epochs = 200,250
schedule.drop_factor = 10

train.batch_size = 12
train.threads = 1
train.clip_norm = 0.1
train.aux_loss = false
train.checkpoint_every = 10
train.eval_every = 1
train.score_threshold = 0.5
train.top_k = 0

data.train = 
data.val = 
data.val_samples = 400
data.drop_overfull = false

synth.samples = 2000
synth.image_size = 64
synth.num_keypoints = 5
synth.channels = 5
synth.min_instances = 1
synth.max_instances = 3
synth.occlusion = 0.2
synth.blob_radius = 2
synth.min_scale = 8
synth.max_scale = 13
synth.jitter = 0.08
synth.seed = 0
)";

}  // namespace

TEST_CASE("default configuration snapshot") {
  CHECK(DumpRunConfig(RunConfig{}) == std::string(kDefaultSnapshot).substr(1));
}

TEST_CASE("default hyperparameters") {
  const RunConfig c;
  CHECK(c.loss.lambda_l1 == 4.0);
  CHECK(c.loss.lambda_l2 == 0.2);
  CHECK(c.loss.lambda_ctr == 0.5);
  CHECK(c.loss.nonobject_class_weight == 0.1);
  CHECK(c.optimizer.lr_transformer == 1e-4);
  CHECK(c.optimizer.lr_backbone == 1e-5);
  CHECK(c.optimizer.weight_decay == 1e-4);
  CHECK(c.model.dropout == 0.1);
  CHECK(c.model.num_queries == 25);
  CHECK(c.schedule.drop_factor == 10.0);
  CHECK_NOTHROW(c.Validate());
}

TEST_CASE("dump parses back to the same configuration") {
  RunConfig c;
  c.seed = 99;
  c.out_dir = "some dir";
  c.model = ModelConfig::Desk();
  c.schedule.drop_epochs = {};
  c.optimizer.lr_transformer = 3.0000000000000004e-4;
  c.data.drop_overfull = true;
  c.synth.occlusion = 0.1 + 0.2;
  const std::string dump = DumpRunConfig(c);
  CHECK(DumpRunConfig(ParseRunConfig(dump)) == dump);
  const RunConfig back = ParseRunConfig(dump);
  CHECK(back.optimizer.lr_transformer == c.optimizer.lr_transformer);
  CHECK(back.synth.occlusion == c.synth.occlusion);
  CHECK(back.out_dir == "some dir");
  CHECK(back.model.backbone_channels == c.model.backbone_channels);
  CHECK(back.schedule.drop_epochs.empty());
}

TEST_CASE("every key appears in the dump") {
  const std::string dump = DumpRunConfig(RunConfig{});
  for (const std::string& key : RunConfigKeys()) {
    CHECK(dump.find(key + " = ") != std::string::npos);
  }
}

TEST_CASE("overrides") {
  RunConfig c;
  ApplyOverride(c, "optimizer.lr_transformer=2e-4");
  ApplyOverride(c, " model.backbone_strides = 2,1 ");
  CHECK(c.optimizer.lr_transformer == 2e-4);
  CHECK(c.model.backbone_strides == std::vector<int>{2, 1});
  CHECK(DumpRunConfig(c).find("optimizer.lr_transformer = 2e-04") != std::string::npos);
  CHECK(CodeOf([&] { ApplyOverride(c, "no_equals"); }) == ErrorCode::kParseError);
  CHECK(CodeOf([&] { ApplyOverride(c, "model.bogus=1"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([&] { ApplyOverride(c, "train.batch_size=1.5"); }) == ErrorCode::kInvalidConfig);
  CHECK(CodeOf([&] { ApplyOverride(c, "data.drop_overfull=maybe"); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("parse errors carry line numbers") {
  try {
    ParseRunConfig("# comment\nrun.seed = 3\n\nmodel.heads 4\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParseError);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  try {
    ParseRunConfig("run.seed = 3\nloss.unknown = 1\n");
    FAIL("expected an unknown key");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidConfig);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  const RunConfig c = ParseRunConfig("run.seed = 5  # trailing comment\n");
  CHECK(c.seed == 5);
}

TEST_CASE("validation") {
  RunConfig c;
  c.model = ModelConfig::Desk();
  c.synth.max_instances = 9;
  CHECK(CodeOf([&] { c.Validate(); }) == ErrorCode::kInvalidConfig);
  c.data.drop_overfull = true;
  CHECK_NOTHROW(c.Validate());

  RunConfig heads;
  heads.model.heads = 7;
  CHECK_THROWS_AS(heads.Validate(), Error);

  RunConfig drops;
  drops.schedule.drop_epochs = {250, 200};
  CHECK(CodeOf([&] { drops.Validate(); }) == ErrorCode::kInvalidConfig);

  RunConfig lr;
  lr.optimizer.lr_backbone = -1;
  CHECK(CodeOf([&] { lr.Validate(); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("config file loading") {
  testutil::TempDir dir("config");
  testutil::WriteAll(dir.file("a.cfg"), "model.d_model = 64\nmodel.heads = 4\n");
  const RunConfig c = LoadRunConfig(dir.file("a.cfg"));
  CHECK(c.model.d_model == 64);
  CHECK(c.model.enc_layers == 6);
  CHECK(CodeOf([&] { LoadRunConfig(dir.file("missing.cfg")); }) == ErrorCode::kIoError);
}

TEST_CASE("shipped configs load") {
  const RunConfig reference = LoadRunConfig(std::string(POET_CONFIG_DIR) + "/reference.cfg");
  CHECK(DumpRunConfig(reference) == DumpRunConfig(RunConfig{}));
  const RunConfig tiny = LoadRunConfig(std::string(POET_CONFIG_DIR) + "/synth_tiny.cfg");
  CHECK(tiny.model.d_model == 64);
  CHECK(tiny.model.enc_layers == 2);
  CHECK(tiny.model.dec_layers == 2);
  CHECK(tiny.model.heads == 4);
  CHECK(tiny.model.num_queries == 8);
  CHECK(tiny.synth.num_samples == 2000);
  CHECK(tiny.schedule.total_epochs <= 50);
}
