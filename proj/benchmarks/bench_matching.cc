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

#include "poet/gradcheck.h"
#include "poet/loss.h"
#include "poet/matching.h"
#include "poet/random.h"

namespace {

using namespace poet;

CostMatrix RandomCost(int n, uint64_t seed) {
  Rng rng(seed);
  CostMatrix cost(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost(i, j) = rng.Uniform(-1.0, 1.0);
  }
  return cost;
}

void BM_Hungarian(benchmark::State& state) {
  const CostMatrix cost = RandomCost(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(HungarianAssign(cost));
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(25)->Arg(100);

void BM_BruteForce(benchmark::State& state) {
  const CostMatrix cost = RandomCost(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(BruteForceAssign(cost));
}
BENCHMARK(BM_BruteForce)->Arg(6)->Arg(8);

void BM_CostMatrix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LossInstance inst = RandomLossInstance(3, n, 17);
  const PredictionSet preds = ToPredictionSet(inst.preds);
  const LossWeights w;
  for (auto _ : state) benchmark::DoNotOptimize(BuildCostMatrix(inst.targets, preds, w));
}
BENCHMARK(BM_CostMatrix)->Arg(8)->Arg(25);

void BM_LossGradients(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LossInstance inst = RandomLossInstance(4, n, 17);
  const LossWeights w;
  const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(LossGradients(inst.targets, inst.preds, inst.assignment, w, norms));
  }
}
BENCHMARK(BM_LossGradients)->Arg(8)->Arg(25);

}  // namespace

BENCHMARK_MAIN();
