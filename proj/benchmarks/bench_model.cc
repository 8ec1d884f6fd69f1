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


#include <benchmark/benchmark.h>

#include "poet/data.h"
#include "poet/model.h"
#include "poet/random.h"
#include "poet/tape.h"
#include "poet/training.h"

namespace {

using namespace poet;

ModelConfig DeskFor(const Dataset& ds) {
  ModelConfig c = ModelConfig::Desk();
  c.num_keypoints = ds.num_keypoints;
  c.image_channels = ds.channels;
  return c;
}

void BM_DeskPredict(benchmark::State& state) {
  SynthConfig sc;
  sc.num_samples = 1;
  const Dataset ds = SynthGenerate(sc);
  const PoetModel model(DeskFor(ds), 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.Predict(ds.samples[0].image));
}
BENCHMARK(BM_DeskPredict)->Unit(benchmark::kMillisecond);

void BM_DeskSampleStep(benchmark::State& state) {
  SynthConfig sc;
  sc.num_samples = 1;
  const Dataset ds = SynthGenerate(sc);
  const PoetModel model(DeskFor(ds), 1);
  const TargetSet targets = SampleTargets(ds.samples[0], model.config().num_queries, ds.num_keypoints);
  const LossWeights w;
  const auto norms = LossNormalizers::ForBatch(targets.num_humans(), targets.size());
  for (auto _ : state) {
    Rng rng(2);
    benchmark::DoNotOptimize(
        ComputeSampleStep(model, ds.samples[0].image, targets, w, norms, true, rng));
  }
}
BENCHMARK(BM_DeskSampleStep)->Unit(benchmark::kMillisecond);

void BM_DeskTrainEpoch(benchmark::State& state) {
  SynthConfig sc;
  sc.num_samples = 64;
  const Dataset ds = SynthGenerate(sc);
  PoetModel model(DeskFor(ds), 1);
  OptimState optim = InitOptimState(model.params(), {});
  EpochOptions o;
  o.batch_size = 8;
  o.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(TrainEpoch(model, ds, {}, optim, o));
}
BENCHMARK(BM_DeskTrainEpoch)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
