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

#include "poet/loss.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "poet/error.h"
#include "poet/ops.h"

namespace poet {

PoseLossTerms PoseLoss(const PoseVector& target, const PoseVector& pred, const LossWeights& weights) {
  if (!target.is_human()) throw Error(ErrorCode::kClassMismatch, "pose loss of a non-object target");
  if (target.offsets.size() != pred.offsets.size() ||
      target.visibilities.size() != pred.visibilities.size()) {
    throw Error(ErrorCode::kSizeMismatch, "target and prediction keypoint counts differ");
  }
  double l1 = 0.0, l2 = 0.0;
  for (size_t i = 0; i < target.offsets.size(); ++i) {
    const double vis = target.visibilities[i];
    l1 += std::abs(vis * target.offsets[i] - vis * pred.offsets[i]);
    const double dv = target.visibilities[i] - pred.visibilities[i];
    l2 += dv * dv;
  }
  const double dx = target.center.x - pred.center.x;
  const double dy = target.center.y - pred.center.y;
  return {weights.lambda_l1 * l1, weights.lambda_l2 * l2, weights.lambda_ctr * (dx * dx + dy * dy)};
}

namespace {

void CheckAssignment(const TargetSet& targets, size_t num_preds, const Assignment& a) {
  if (static_cast<size_t>(targets.size()) != num_preds || a.perm.size() != num_preds) {
    throw Error(ErrorCode::kSizeMismatch,
                std::to_string(targets.size()) + " targets, " + std::to_string(num_preds) +
                    " predictions, assignment of " + std::to_string(a.perm.size()));
  }
  std::vector<char> seen(num_preds, 0);
  for (int j : a.perm) {
    if (j < 0 || static_cast<size_t>(j) >= num_preds || seen[static_cast<size_t>(j)]) {
      throw Error(ErrorCode::kSizeMismatch, "assignment is not a permutation");
    }
    seen[static_cast<size_t>(j)] = 1;
  }
}

double ClassWeight(const PoseVector& target, const LossWeights& weights) {
  return target.is_human() ? 1.0 : weights.nonobject_class_weight;
}

}  // namespace

LossBreakdown HungarianLoss(const TargetSet& targets, const PredictionSet& preds,
                            const Assignment& assignment, const LossWeights& weights,
                            const LossNormalizers& norms) {
  CheckAssignment(targets, preds.size(), assignment);
  LossBreakdown out;
  for (int i = 0; i < targets.size(); ++i) {
    const PoseVector& t = targets.slots[static_cast<size_t>(i)];
    const PredictionSlot& p = preds[static_cast<size_t>(assignment.perm[static_cast<size_t>(i)])];
    out.class_nll += ClassWeight(t, weights) * -std::log(std::max(p.prob(t.cls), kMinProbability));
    if (!t.is_human()) continue;
    const PoseLossTerms terms = PoseLoss(t, p.pose, weights);
    out.keypoint_l1 += terms.keypoint_l1;
    out.visibility_l2 += terms.visibility_l2;
    out.center_l2 += terms.center_l2;
  }
  out.class_nll /= norms.classes;
  out.keypoint_l1 /= norms.pose;
  out.visibility_l2 /= norms.pose;
  out.center_l2 /= norms.pose;
  out.total = out.class_nll + out.keypoint_l1 + out.visibility_l2 + out.center_l2;
  return out;
}

PredictionTensors ValuesOf(const PredictionVars& vars) {
  return {vars.class_logits.value(), vars.centers.value(), vars.offsets.value(),
          vars.visibilities.value()};
}

PredictionSet ToPredictionSet(const PredictionTensors& t) {
  const int64_t n = t.class_logits.dim(0);
  const int64_t two_k = t.offsets.dim(1);
  PredictionSet set(static_cast<size_t>(n));
  for (int64_t s = 0; s < n; ++s) {
    PredictionSlot& slot = set[static_cast<size_t>(s)];
    slot.class_logits = {t.class_logits.at(s, 0), t.class_logits.at(s, 1)};
    slot.class_probs = SoftmaxPair(slot.class_logits);
    slot.pose.cls = slot.class_probs[0] >= slot.class_probs[1] ? PoseClass::kHuman
                                                               : PoseClass::kNonObject;
    slot.pose.center = {t.centers.at(s, 0), t.centers.at(s, 1)};
    slot.pose.offsets.resize(static_cast<size_t>(two_k));
    slot.pose.visibilities.resize(static_cast<size_t>(two_k));
    for (int64_t c = 0; c < two_k; ++c) {
      slot.pose.offsets[static_cast<size_t>(c)] = t.offsets.at(s, c);
      slot.pose.visibilities[static_cast<size_t>(c)] = t.visibilities.at(s, c);
    }
  }
  return set;
}

LossBreakdown LossVars::values() const {
  return {total.value().item(), class_nll.value().item(), keypoint_l1.value().item(),
          visibility_l2.value().item(), center_l2.value().item()};
}

LossVars RecordHungarianLoss(const TargetSet& targets, const PredictionVars& preds,
                             const Assignment& assignment, const LossWeights& weights,
                             const LossNormalizers& norms) {
  using ad::Tensor;
  using ad::Var;
  ad::Tape& tape = *preds.class_logits.tape();
  const int64_t n = preds.class_logits.value().dim(0);
  const int64_t two_k = preds.offsets.value().dim(1);
  CheckAssignment(targets, static_cast<size_t>(n), assignment);

  // Each prediction row is matched to exactly one target, so the class term
  // is a weighted sum over the [N x 2] log-probability matrix.
  Tensor class_weights({n, 2});
  std::vector<int> human_rows;
  std::vector<int> human_targets;
  for (int i = 0; i < targets.size(); ++i) {
    const PoseVector& t = targets.slots[static_cast<size_t>(i)];
    const int j = assignment.perm[static_cast<size_t>(i)];
    class_weights.at(j, static_cast<int64_t>(t.cls)) = -ClassWeight(t, weights) / norms.classes;
    if (t.is_human()) {
      human_rows.push_back(j);
      human_targets.push_back(i);
    }
  }
  LossVars out;
  Var log_probs = ad::ClampedLog(ad::Softmax(preds.class_logits, 1), kMinProbability);
  out.class_nll = ad::Sum(ad::Mul(log_probs, tape.Constant(std::move(class_weights))));

  if (human_rows.empty()) {
    out.keypoint_l1 = tape.Constant(Tensor::Scalar(0.0));
    out.visibility_l2 = tape.Constant(Tensor::Scalar(0.0));
    out.center_l2 = tape.Constant(Tensor::Scalar(0.0));
  } else {
    const int64_t h = static_cast<int64_t>(human_rows.size());
    Tensor centers({h, 2}), vis({h, two_k}), masked_offsets({h, two_k});
    for (int64_t r = 0; r < h; ++r) {
      const PoseVector& t = targets.slots[static_cast<size_t>(human_targets[static_cast<size_t>(r)])];
      centers.at(r, 0) = t.center.x;
      centers.at(r, 1) = t.center.y;
      for (int64_t c = 0; c < two_k; ++c) {
        const double v = t.visibilities[static_cast<size_t>(c)];
        vis.at(r, c) = v;
        masked_offsets.at(r, c) = v * t.offsets[static_cast<size_t>(c)];
      }
    }
    Var mask = tape.Constant(vis);
    Var pred_offsets = ad::GatherRows(preds.offsets, human_rows);
    Var offset_diff = ad::Sub(ad::Mul(pred_offsets, mask), tape.Constant(std::move(masked_offsets)));
    out.keypoint_l1 = ad::Scale(ad::Sum(ad::Abs(offset_diff)), weights.lambda_l1 / norms.pose);

    Var vis_diff = ad::Sub(ad::GatherRows(preds.visibilities, human_rows), mask);
    out.visibility_l2 = ad::Scale(ad::Sum(ad::Square(vis_diff)), weights.lambda_l2 / norms.pose);

    Var center_diff =
        ad::Sub(ad::GatherRows(preds.centers, human_rows), tape.Constant(std::move(centers)));
    out.center_l2 = ad::Scale(ad::Sum(ad::Square(center_diff)), weights.lambda_ctr / norms.pose);
  }
  out.total = ad::Add(ad::Add(out.class_nll, out.keypoint_l1),
                      ad::Add(out.visibility_l2, out.center_l2));
  return out;
}

PredictionTensors LossGradients(const TargetSet& targets, const PredictionTensors& preds,
                                const Assignment& assignment, const LossWeights& weights,
                                const LossNormalizers& norms) {
  ad::Tape tape;
  PredictionVars vars{tape.Parameter(preds.class_logits), tape.Parameter(preds.centers),
                      tape.Parameter(preds.offsets), tape.Parameter(preds.visibilities)};
  LossVars loss = RecordHungarianLoss(targets, vars, assignment, weights, norms);
  ad::Gradients grads = tape.Backward(loss.total);
  return {grads.Of(vars.class_logits), grads.Of(vars.centers), grads.Of(vars.offsets),
          grads.Of(vars.visibilities)};
}

}  // namespace poet
