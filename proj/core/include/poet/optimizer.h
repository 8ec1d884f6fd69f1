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

#ifndef POET_OPTIMIZER_H_
#define POET_OPTIMIZER_H_

#include <cstdint>
#include <vector>

#include "poet/model.h"
#include "poet/tensor.h"

namespace poet {

struct AdamWConfig {
  double lr_transformer = 1e-4;
  double lr_backbone = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamWConfig config;
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;
  int64_t step = 0;
};

OptimState InitOptimState(const ParameterStore& params, const AdamWConfig& config);

// One AdamW update with bias correction. Weight decay is decoupled
// (p -= lr * wd * p) and skipped for parameters marked decay = false. Each
// parameter group uses its own learning rate divided by `lr_divisor`.
// Throws kShapeMismatch if grads do not mirror the parameters.
void AdamWStep(ParameterStore& params, const std::vector<ad::Tensor>& grads, OptimState& state,
               double lr_divisor = 1.0);

// Scales grads in place so their joint L2 norm is at most max_norm; returns
// the norm before clipping. max_norm <= 0 disables clipping.
double ClipGlobalNorm(std::vector<ad::Tensor>& grads, double max_norm);

// Step decay: the learning rate is divided by drop_factor after each epoch
// listed in drop_epochs (1-based epochs).
struct Schedule {
  int total_epochs = 300;
  std::vector<int> drop_epochs = {200, 250};
  double drop_factor = 10.0;

  // Throws kInvalidConfig unless drop_epochs is strictly increasing and below
  // total_epochs.
  void Validate() const;
  // Product of drop factors in force during `epoch`.
  double Divisor(int epoch) const;
  double EffectiveLr(double base, int epoch) const { return base / Divisor(epoch); }
};

// Moments and step count as named tensors ("optim.m.<param>", ...), for
// checkpoints.
std::vector<NamedTensor> OptimStateToNamed(const OptimState& state, const ParameterStore& params);
void LoadOptimState(const std::vector<NamedTensor>& tensors, const ParameterStore& params,
                    OptimState& state);

}  // namespace poet

#endif  // POET_OPTIMIZER_H_
