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

#include "poet/optimizer.h"

#include <cmath>
#include <string>

#include "poet/error.h"

namespace poet {

OptimState InitOptimState(const ParameterStore& params, const AdamWConfig& config) {
  OptimState s;
  s.config = config;
  for (const Parameter& p : params.all()) {
    s.first_moment.emplace_back(p.value.shape());
    s.second_moment.emplace_back(p.value.shape());
  }
  return s;
}

void AdamWStep(ParameterStore& params, const std::vector<ad::Tensor>& grads, OptimState& state,
               double lr_divisor) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, std::to_string(grads.size()) + " gradients for " +
                                               std::to_string(params.size()) + " parameters");
  }
  const AdamWConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.all()[i];
    const ad::Tensor& g = grads[i];
    if (g.shape() != p.value.shape()) {
      throw Error(ErrorCode::kShapeMismatch, p.name + ": gradient " + ad::ShapeString(g.shape()) +
                                                 " vs parameter " +
                                                 ad::ShapeString(p.value.shape()));
    }
    const double base = p.group == ParamGroup::kBackbone ? c.lr_backbone : c.lr_transformer;
    const double lr = base / lr_divisor;
    const double decay = p.decay ? lr * c.weight_decay : 0.0;
    ad::Tensor& m = state.first_moment[i];
    ad::Tensor& v = state.second_moment[i];
    for (int64_t j = 0; j < g.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.value[j] -= decay * p.value[j];
      p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double ClipGlobalNorm(std::vector<ad::Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const ad::Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / (norm + 1e-6);
    for (ad::Tensor& g : grads) {
      for (double& v : g.data()) v *= factor;
    }
  }
  return norm;
}

void Schedule::Validate() const {
  if (total_epochs < 1) throw Error(ErrorCode::kInvalidConfig, "total_epochs must be >= 1");
  if (!(drop_factor > 0.0)) throw Error(ErrorCode::kInvalidConfig, "drop_factor must be > 0");
  for (size_t i = 0; i < drop_epochs.size(); ++i) {
    if (drop_epochs[i] < 1 || drop_epochs[i] >= total_epochs ||
        (i > 0 && drop_epochs[i] <= drop_epochs[i - 1])) {
      throw Error(ErrorCode::kInvalidConfig,
                  "drop_epochs must be strictly increasing and below total_epochs");
    }
  }
}

double Schedule::Divisor(int epoch) const {
  double divisor = 1.0;
  for (int d : drop_epochs) {
    if (epoch > d) divisor *= drop_factor;
  }
  return divisor;
}

std::vector<NamedTensor> OptimStateToNamed(const OptimState& state, const ParameterStore& params) {
  std::vector<NamedTensor> out;
  out.push_back({"optim.step", ad::Tensor::Scalar(static_cast<double>(state.step))});
  for (size_t i = 0; i < params.size(); ++i) {
    out.push_back({"optim.m." + params.all()[i].name, state.first_moment[i]});
    out.push_back({"optim.v." + params.all()[i].name, state.second_moment[i]});
  }
  return out;
}

void LoadOptimState(const std::vector<NamedTensor>& tensors, const ParameterStore& params,
                    OptimState& state) {
  const NamedTensor* step = FindTensor(tensors, "optim.step");
  if (!step) throw Error(ErrorCode::kMissingField, "checkpoint lacks optim.step");
  state.step = static_cast<int64_t>(step->value.item());
  state.first_moment.clear();
  state.second_moment.clear();
  for (const Parameter& p : params.all()) {
    const NamedTensor* m = FindTensor(tensors, "optim.m." + p.name);
    const NamedTensor* v = FindTensor(tensors, "optim.v." + p.name);
    if (!m || !v) throw Error(ErrorCode::kMissingField, "checkpoint lacks moments for " + p.name);
    if (m->value.shape() != p.value.shape() || v->value.shape() != p.value.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "moment shape mismatch for " + p.name);
    }
    state.first_moment.push_back(m->value);
    state.second_moment.push_back(v->value);
  }
}

}  // namespace poet
