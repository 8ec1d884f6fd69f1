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
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "poet/config.h"
#include "poet/error.h"
#include "poet/optimizer.h"
#include "poet/training.h"
#include "test_util.h"

using namespace poet;
using ad::Tensor;
using testutil::BitwiseEqual;
using testutil::CodeOf;

namespace {

RunConfig TinyRun(const std::string& out_dir) {
  RunConfig c;
  c.seed = 3;
  c.out_dir = out_dir;
  c.model = ModelConfig::Desk();
  c.model.d_model = 16;
  c.model.enc_layers = 1;
  c.model.heads = 2;
  c.model.num_queries = 4;
  c.model.backbone_channels = {4, 8};
  c.model.backbone_strides = {2, 2};
  c.model.ffn_hidden = 12;
  c.model.dim_feedforward = 20;
  c.synth.num_samples = 12;
  c.synth.image_size = 16;
  c.synth.num_keypoints = 3;
  c.synth.channels = 3;
  c.synth.min_instances = 0;
  c.synth.max_instances = 2;
  c.synth.min_scale = 3;
  c.synth.max_scale = 5;
  c.synth.blob_radius = 1;
  c.synth.seed = 1;
  c.data.val_samples = 6;
  c.schedule.total_epochs = 2;
  c.schedule.drop_epochs = {};
  c.train.batch_size = 4;
  c.train.checkpoint_every = 1;
  c.optimizer.lr_transformer = 1e-3;
  c.optimizer.lr_backbone = 1e-3;
  return c;
}

std::vector<std::vector<std::string>> ReadCsv(const std::string& path) {
  std::istringstream in(testutil::ReadAll(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

ParameterStore ScalarStore(double value, bool decay) {
  ParameterStore s;
  s.Add("w", Tensor({1}, {value}), ParamGroup::kTransformer, decay);
  return s;
}

}  // namespace

TEST_CASE("adamw first step moves by the learning rate") {
  ParameterStore s = ScalarStore(1.0, false);
  AdamWConfig c;
  c.lr_transformer = 0.01;
  OptimState st = InitOptimState(s, c);
  AdamWStep(s, {Tensor({1}, {1.0})}, st);
  CHECK(s[0].value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(st.step == 1);
}

TEST_CASE("adamw with zero gradients") {
  ParameterStore s = ScalarStore(2.0, true);
  AdamWConfig c;
  c.weight_decay = 0.0;
  OptimState st = InitOptimState(s, c);
  AdamWStep(s, {Tensor({1})}, st);
  CHECK(s[0].value[0] == 2.0);

  c.weight_decay = 0.5;
  c.lr_transformer = 0.1;
  OptimState decayed = InitOptimState(s, c);
  AdamWStep(s, {Tensor({1})}, decayed);
  CHECK(s[0].value[0] == 2.0 - 0.1 * 0.5 * 2.0);

  ParameterStore exempt = ScalarStore(2.0, false);
  OptimState e = InitOptimState(exempt, c);
  AdamWStep(exempt, {Tensor({1})}, e);
  CHECK(exempt[0].value[0] == 2.0);
}

TEST_CASE("adamw groups and divisor") {
  ParameterStore s;
  s.Add("a", Tensor({1}, {0.0}), ParamGroup::kTransformer, false);
  s.Add("b", Tensor({1}, {0.0}), ParamGroup::kBackbone, false);
  AdamWConfig c;
  OptimState st = InitOptimState(s, c);
  AdamWStep(s, {Tensor({1}, {1.0}), Tensor({1}, {1.0})}, st, 10.0);
  CHECK(s[0].value[0] == doctest::Approx(-1e-5).epsilon(1e-6));
  CHECK(s[1].value[0] == doctest::Approx(-1e-6).epsilon(1e-6));
  CHECK(CodeOf([&] { AdamWStep(s, {Tensor({2}), Tensor({1})}, st); }) == ErrorCode::kShapeMismatch);
  CHECK(CodeOf([&] { AdamWStep(s, {Tensor({1})}, st); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("global norm clipping") {
  std::vector<Tensor> g = {Tensor({2}, {3.0, 0.0}), Tensor({1}, {4.0})};
  CHECK(ClipGlobalNorm(g, 1.0) == 5.0);
  CHECK(g[0][0] == 3.0 / (5.0 + 1e-6));
  CHECK(g[1][0] == 4.0 / (5.0 + 1e-6));
  std::vector<Tensor> small = {Tensor({1}, {0.05})};
  ClipGlobalNorm(small, 0.1);
  CHECK(small[0][0] == 0.05);
  std::vector<Tensor> off = {Tensor({1}, {7.0})};
  ClipGlobalNorm(off, 0.0);
  CHECK(off[0][0] == 7.0);
}

TEST_CASE("learning rate schedule") {
  Schedule s;
  s.total_epochs = 300;
  s.drop_epochs = {200, 250};
  CHECK(s.Divisor(1) == 1.0);
  CHECK(s.Divisor(200) == 1.0);
  CHECK(s.EffectiveLr(1e-4, 201) == 1e-4 / 10.0);
  CHECK(s.Divisor(251) == 100.0);
  CHECK(s.EffectiveLr(1e-4, 300) == 1e-4 / 100.0);
  s.drop_epochs = {300};
  CHECK(CodeOf([&] { s.Validate(); }) == ErrorCode::kInvalidConfig);
  s.drop_epochs = {5, 5};
  CHECK(CodeOf([&] { s.Validate(); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("optimizer state named roundtrip") {
  const PoetModel m(TinyRun("").model, 1);
  OptimState st = InitOptimState(m.params(), {});
  st.step = 7;
  st.first_moment[0][0] = 0.25;
  OptimState back = InitOptimState(m.params(), {});
  LoadOptimState(OptimStateToNamed(st, m.params()), m.params(), back);
  CHECK(back.step == 7);
  CHECK(back.first_moment[0][0] == 0.25);
}

TEST_CASE("cost matrix construction adds no tape nodes") {
  testutil::TempDir dir("iso");
  const RunConfig c = TinyRun(dir.path().string());
  const RunData data = PrepareRunData(c);
  ModelConfig mc = c.model;
  mc.num_keypoints = data.train.num_keypoints;
  mc.image_channels = data.train.channels;
  const PoetModel model(mc, 1);
  ad::Tape tape;
  const auto p = model.Bind(tape, true);
  Rng rng(1);
  const ForwardOutput out = model.Forward(tape, p, data.train.samples[0].image, true, rng);
  const size_t before = tape.size();
  const TargetSet targets = SampleTargets(data.train.samples[0], 4, mc.num_keypoints);
  const Assignment a = HungarianAssign(
      BuildCostMatrix(targets, ToPredictionSet(ValuesOf(out.final())), c.loss));
  CHECK(tape.size() == before);
  CHECK(a.perm.size() == 4);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  testutil::TempDir dir("lr0");
  RunConfig c = TinyRun(dir.path().string());
  c.optimizer.lr_transformer = 0.0;
  c.optimizer.lr_backbone = 0.0;
  const RunData data = PrepareRunData(c);
  ModelConfig mc = c.model;
  mc.num_keypoints = data.train.num_keypoints;
  mc.image_channels = data.train.channels;
  PoetModel m(mc, 2);
  const PoetModel before(mc, 2);
  OptimState st = InitOptimState(m.params(), c.optimizer);
  const EpochStats stats = TrainEpoch(m, data.train, c.loss, st, {4, 0.1, 1, 5, 1.0});
  CHECK(stats.batches == 3);
  for (size_t i = 0; i < m.params().size(); ++i) {
    CHECK(BitwiseEqual(m.params()[static_cast<int>(i)].value,
                       before.params()[static_cast<int>(i)].value));
  }
}

TEST_CASE("thread count does not change the result") {
  testutil::TempDir dir("threads");
  const RunConfig c = TinyRun(dir.path().string());
  const RunData data = PrepareRunData(c);
  ModelConfig mc = c.model;
  mc.num_keypoints = data.train.num_keypoints;
  mc.image_channels = data.train.channels;
  PoetModel a(mc, 3), b(mc, 3);
  OptimState sa = InitOptimState(a.params(), c.optimizer);
  OptimState sb = InitOptimState(b.params(), c.optimizer);
  const EpochStats ra = TrainEpoch(a, data.train, c.loss, sa, {4, 0.1, 1, 9, 1.0});
  const EpochStats rb = TrainEpoch(b, data.train, c.loss, sb, {4, 0.1, 3, 9, 1.0});
  CHECK(ra.loss.total == rb.loss.total);
  for (size_t i = 0; i < a.params().size(); ++i) {
    CHECK(BitwiseEqual(a.params()[static_cast<int>(i)].value, b.params()[static_cast<int>(i)].value));
  }
}

TEST_CASE("single sample overfits within 200 steps") {
  testutil::TempDir dir("overfit");
  RunConfig c = TinyRun(dir.path().string());
  c.synth.min_instances = 2;
  c.model.dropout = 0.0;
  RunData data = PrepareRunData(c);
  data.train.samples.resize(1);
  ModelConfig mc = c.model;
  mc.num_keypoints = data.train.num_keypoints;
  mc.image_channels = data.train.channels;
  PoetModel m(mc, 4);
  OptimState st = InitOptimState(m.params(), c.optimizer);
  const double initial = DatasetLoss(m, data.train, c.loss, 1).total;
  for (int step = 0; step < 200; ++step) {
    TrainEpoch(m, data.train, c.loss, st, {1, 0.1, 1, static_cast<uint64_t>(step), 1.0});
  }
  const double final = DatasetLoss(m, data.train, c.loss, 1).total;
  CHECK(final < 0.1 * initial);
}

TEST_CASE("training errors name the batch") {
  testutil::TempDir dir("err");
  const RunConfig c = TinyRun(dir.path().string());
  RunData data = PrepareRunData(c);
  ModelConfig mc = c.model;
  mc.num_keypoints = data.train.num_keypoints;
  mc.image_channels = data.train.channels;
  PoetModel m(mc, 1);
  OptimState st = InitOptimState(m.params(), c.optimizer);
  data.train.samples[0].image = Tensor({3, 15, 16});
  try {
    TrainEpoch(m, data.train, c.loss, st, {4, 0.1, 1, 0, 1.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndivisibleInput);
    CHECK(std::string(e.what()).starts_with("IndivisibleInput: batch 0: image"));
  }
}

TEST_CASE("detection selection") {
  PredictionSet preds(3);
  for (size_t i = 0; i < 3; ++i) {
    preds[i].pose = NonObjectPose(1);
    preds[i].pose.center = {0.5, 0.5};
    preds[i].pose.visibilities = {0.9, 0.9};
  }
  preds[0].class_probs = {0.4, 0.6};
  preds[1].class_probs = {0.7, 0.3};
  preds[2].class_probs = {0.9, 0.1};
  EvalSettings s;
  const auto dets = SelectDetections(preds, {10, 20}, s);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].score == 0.9);
  CHECK(dets[1].score == 0.7);
  CHECK(dets[0].keypoints[0] == Keypoint{5, 10, 1});
  s.top_k = 1;
  CHECK(SelectDetections(preds, {10, 20}, s).size() == 1);
  s.top_k = 0;
  s.score_threshold = 1.0;
  CHECK(SelectDetections(preds, {10, 20}, s).empty());
}

TEST_CASE("ground truth predictions evaluate perfectly") {
  SynthConfig sc;
  sc.num_samples = 20;
  const Dataset ds = SynthGenerate(sc);
  const auto gts = GroundTruthOf(ds);
  std::vector<std::vector<ScoredPose>> dets;
  for (const Sample& s : ds.samples) {
    PredictionSet preds;
    for (const InstanceAnnotation& inst : s.instances) {
      PredictionSlot slot;
      slot.class_probs = {1.0, 0.0};
      slot.pose = EncodePose(inst);
      preds.push_back(slot);
    }
    dets.push_back(SelectDetections(preds, s.image_size, {}));
  }
  EvalOptions o;
  o.oks = DefaultOksParams(ds.num_keypoints);
  const EvalResult r = EvaluateDetections(dets, gts, o);
  CHECK(*r.ap == 1.0);
  CHECK(*r.ar == 1.0);
}

TEST_CASE("default oks constants") {
  CHECK(DefaultOksParams(17).k == OksParams::Coco().k);
  CHECK(DefaultOksParams(5).k == OksParams::Uniform(5).k);
}

TEST_CASE("evaluation report shape and threshold one") {
  testutil::TempDir dir("eval");
  const RunConfig c = TinyRun(dir.path().string());
  const RunData data = PrepareRunData(c);
  ModelConfig mc = c.model;
  mc.num_keypoints = data.train.num_keypoints;
  mc.image_channels = data.train.channels;
  const PoetModel m(mc, 1);
  EvalSettings s;
  s.score_threshold = 1.0;
  const EvalReport r = Evaluate(m, data.val, s, c.loss, 4);
  CHECK(r.per_layer.size() == static_cast<size_t>(mc.dec_layers));
  if (r.final.ap) CHECK(*r.final.ap == 0.0);
  CHECK(r.final.ap == r.per_layer.back().ap);
}

TEST_CASE("overfull samples are rejected or dropped") {
  testutil::TempDir dir("overfull");
  RunConfig c = TinyRun(dir.path().string());
  c.synth.min_instances = 3;
  c.synth.max_instances = 6;
  CHECK(CodeOf([&] { PrepareRunData(c); }) == ErrorCode::kInvalidConfig);
  c.data.drop_overfull = true;
  const RunData kept = PrepareRunData(c);
  CHECK(!kept.train.samples.empty());
  CHECK(kept.train.samples.size() < 12);

  RunConfig fits = TinyRun(dir.path().string());
  SynthConfig crowded = fits.synth;
  crowded.min_instances = 5;
  crowded.max_instances = 5;
  SaveCocoKeypoints(SynthGenerate(crowded), dir.file("crowded.json"));
  fits.data.train = dir.file("crowded.json");
  CHECK(CodeOf([&] { PrepareRunData(fits); }) == ErrorCode::kTooManyInstances);
}

TEST_CASE("trainer writes logs and checkpoints") {
  testutil::TempDir dir("trainer");
  const RunConfig c = TinyRun(dir.path().string());
  Trainer t(c, PrepareRunData(c));
  const std::string last = t.Run();
  CHECK(std::filesystem::path(last).filename() == "epoch_0002.ckpt");
  for (const char* f : {"config.cfg", "losses.csv", "map.csv", "per_layer_map.csv",
                        "epoch_0001.ckpt", "epoch_0001.cfg", "epoch_0002.ckpt"}) {
    CHECK(std::filesystem::exists(dir.path() / f));
  }
  CHECK(testutil::ReadAll(dir.file("config.cfg")) == DumpRunConfig(c));
  const auto losses = ReadCsv(dir.file("losses.csv"));
  REQUIRE(losses.size() == 5);
  CHECK(losses[0] == std::vector<std::string>{"epoch", "split", "class", "keypoint", "visibility",
                                              "center", "total"});
  CHECK(losses[1][1] == "train");
  CHECK(losses[2][1] == "val");
  const auto layers = ReadCsv(dir.file("per_layer_map.csv"));
  REQUIRE(layers.size() == 5);
  CHECK(layers[1][1] == "1");
  CHECK(layers[2][1] == "2");
}

TEST_CASE("logged validation loss matches the checkpoint") {
  testutil::TempDir dir("ckpt");
  const RunConfig c = TinyRun(dir.path().string());
  const RunData data = PrepareRunData(c);
  Trainer t(c, data);
  t.Run();
  const auto losses = ReadCsv(dir.file("losses.csv"));
  const LoadedCheckpoint ck = LoadTrainingCheckpoint(dir.file("epoch_0001.ckpt"));
  CHECK(ck.epoch == 1);
  CHECK(DumpRunConfig(ck.config) == DumpRunConfig(c));
  const PoetModel m = ModelFromCheckpoint(ck);
  const LossBreakdown l = DatasetLoss(m, data.val, c.loss, c.train.batch_size);
  REQUIRE(losses[2][0] == "1");
  REQUIRE(losses[2][1] == "val");
  CHECK(std::stod(losses[2][6]) == l.total);
  CHECK(std::stod(losses[2][2]) == l.class_nll);
}

TEST_CASE("resume reproduces an uninterrupted run") {
  testutil::TempDir a("full"), b("resumed");
  const RunConfig ca = TinyRun(a.path().string());
  Trainer full(ca, PrepareRunData(ca));
  full.Run();

  RunConfig cb = TinyRun(b.path().string());
  cb.schedule.total_epochs = 1;
  Trainer first(cb, PrepareRunData(cb));
  first.Run();
  cb.schedule.total_epochs = 2;
  Trainer second(cb, PrepareRunData(cb));
  second.Resume(b.file("epoch_0001.ckpt"));
  second.Run();
  CHECK(testutil::ReadAll(a.file("losses.csv")) == testutil::ReadAll(b.file("losses.csv")));
  CHECK(testutil::ReadAll(a.file("epoch_0002.ckpt")) == testutil::ReadAll(b.file("epoch_0002.ckpt")));
}

TEST_CASE("identical runs are byte-identical") {
  testutil::TempDir a("rep_a"), b("rep_b");
  RunConfig ca = TinyRun(a.path().string());
  RunConfig cb = TinyRun(b.path().string());
  Trainer(ca, PrepareRunData(ca)).Run();
  Trainer(cb, PrepareRunData(cb)).Run();
  CHECK(testutil::ReadAll(a.file("losses.csv")) == testutil::ReadAll(b.file("losses.csv")));
  CHECK(testutil::ReadAll(a.file("epoch_0002.ckpt")) == testutil::ReadAll(b.file("epoch_0002.ckpt")));
}
