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


#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "poet/error.h"
#include "poet/finite_diff.h"
#include "poet/gradcheck.h"
#include "poet/loss.h"
#include "poet/matching.h"
#include "poet/ops.h"
#include "poet/random.h"
#include "test_util.h"

using namespace poet;
using ad::Tensor;
using testutil::BitwiseEqual;
using testutil::CodeOf;

namespace {

PoseVector Human(double cx, double cy, std::vector<double> offsets, std::vector<double> vis) {
  PoseVector p;
  p.cls = PoseClass::kHuman;
  p.center = {cx, cy};
  p.offsets = std::move(offsets);
  p.visibilities = std::move(vis);
  return p;
}

double TotalLoss(const LossInstance& inst, const PredictionTensors& preds, const LossWeights& w) {
  const int n = inst.targets.size();
  return HungarianLoss(inst.targets, ToPredictionSet(preds), inst.assignment, w,
                       LossNormalizers::ForBatch(inst.targets.num_humans(), n))
      .total;
}

// Moves prediction slots so that slot perm[j] takes the old slot j.
PredictionTensors PermuteSlots(const PredictionTensors& p, const std::vector<int>& perm) {
  auto apply = [&](const Tensor& t) {
    Tensor out(t.shape());
    const int64_t cols = t.dim(1);
    for (size_t j = 0; j < perm.size(); ++j) {
      for (int64_t c = 0; c < cols; ++c) out.at(perm[j], c) = t.at(static_cast<int64_t>(j), c);
    }
    return out;
  };
  return {apply(p.class_logits), apply(p.centers), apply(p.offsets), apply(p.visibilities)};
}

}  // namespace

TEST_CASE("pose loss examples") {
  const LossWeights w;
  const PoseVector t = Human(0.4, 0.6, {0.1, 0.1}, {1, 1});
  CHECK(PoseLoss(t, t, w).total() == 0.0);

  const PoseVector p = Human(0.4, 0.6, {0.2, 0.0}, {1, 1});
  const PoseLossTerms terms = PoseLoss(t, p, w);
  CHECK(terms.keypoint_l1 == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(terms.visibility_l2 == 0.0);
  CHECK(terms.center_l2 == 0.0);

  const PoseVector hidden = Human(0.4, 0.6, {0.0, 0.0}, {0, 0});
  const PoseVector guess = Human(0.4, 0.6, {0.7, -3.0}, {0.3, 0.3});
  const PoseLossTerms h = PoseLoss(hidden, guess, w);
  CHECK(h.keypoint_l1 == 0.0);
  CHECK(h.visibility_l2 == doctest::Approx(0.036).epsilon(1e-14));
  CHECK(h.total() == doctest::Approx(0.036).epsilon(1e-14));

  CHECK(CodeOf([&] { PoseLoss(NonObjectPose(1), p, w); }) == ErrorCode::kClassMismatch);
}

TEST_CASE("class term with non-object weighting") {
  const LossWeights w;
  const std::vector<PoseVector> humans = {Human(0.5, 0.5, {0, 0}, {1, 1})};
  const TargetSet targets = PadTargets(humans, 2, 1);
  PredictionSet preds(2);
  for (PredictionSlot& s : preds) s.class_probs = {0.5, 0.5};
  preds[0].pose = humans[0];
  preds[1].pose = NonObjectPose(1);
  const Assignment id{{0, 1}, 0.0};
  const LossBreakdown raw = HungarianLoss(targets, preds, id, w, {1.0, 1.0});
  CHECK(raw.class_nll == doctest::Approx(1.1 * std::log(2.0)).epsilon(1e-14));
  CHECK(raw.class_nll == doctest::Approx(0.76246).epsilon(1e-5));
  const LossBreakdown normalized =
      HungarianLoss(targets, preds, id, w, LossNormalizers::ForBatch(1, 2));
  CHECK(normalized.class_nll == doctest::Approx(raw.class_nll / 2).epsilon(1e-14));
}

TEST_CASE("perfect predictions have zero loss") {
  const LossWeights w;
  const std::vector<PoseVector> humans = {Human(0.3, 0.7, {0.1, -0.1, 0, 0}, {1, 1, 0, 0})};
  const TargetSet targets = PadTargets(humans, 3, 2);
  PredictionSet preds(3);
  for (size_t i = 0; i < 3; ++i) {
    preds[i].pose = targets.slots[i];
    preds[i].class_probs = targets.slots[i].is_human() ? std::array<double, 2>{1, 0}
                                                       : std::array<double, 2>{0, 1};
  }
  const LossBreakdown l =
      HungarianLoss(targets, preds, {{0, 1, 2}, 0}, w, LossNormalizers::ForBatch(1, 3));
  CHECK(l.total == 0.0);
}

TEST_CASE("no humans keeps only the class term") {
  const LossWeights w;
  const TargetSet targets = PadTargets({}, 3, 2);
  const LossInstance inst = RandomLossInstance(4, 3, 2);
  const LossNormalizers norms = LossNormalizers::ForBatch(0, 3);
  CHECK(norms.pose == 1.0);
  const LossBreakdown l =
      HungarianLoss(targets, ToPredictionSet(inst.preds), {{0, 1, 2}, 0}, w, norms);
  CHECK(l.keypoint_l1 == 0.0);
  CHECK(l.visibility_l2 == 0.0);
  CHECK(l.center_l2 == 0.0);
  CHECK(l.class_nll > 0.0);
  CHECK(l.total == l.class_nll);
}

TEST_CASE("probability clamp keeps the loss finite") {
  const LossWeights w;
  const std::vector<PoseVector> humans = {Human(0.5, 0.5, {0, 0}, {1, 1})};
  PredictionSet preds(1);
  preds[0].class_probs = {0.0, 1.0};
  preds[0].pose = humans[0];
  const LossBreakdown l = HungarianLoss(PadTargets(humans, 1, 1), preds, {{0}, 0}, w, {1, 1});
  CHECK(l.class_nll == doctest::Approx(-std::log(kMinProbability)).epsilon(1e-12));
}

TEST_CASE("components are non-negative and sum to the total") {
  const LossWeights w;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const LossInstance inst = RandomLossInstance(seed, rng.UniformInt(1, 6), rng.UniformInt(1, 5));
    const LossBreakdown l =
        HungarianLoss(inst.targets, ToPredictionSet(inst.preds), inst.assignment, w,
                      LossNormalizers::ForBatch(inst.targets.num_humans(), inst.targets.size()));
    CHECK(l.class_nll >= 0.0);
    CHECK(l.keypoint_l1 >= 0.0);
    CHECK(l.visibility_l2 >= 0.0);
    CHECK(l.center_l2 >= 0.0);
    CHECK(l.total == doctest::Approx(l.class_nll + l.keypoint_l1 + l.visibility_l2 + l.center_l2)
                         .epsilon(1e-14));
  }
}

TEST_CASE("keypoint weight homogeneity") {
  LossWeights w;
  LossWeights w3 = w;
  w3.lambda_l1 = 3 * w.lambda_l1;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const LossInstance inst = RandomLossInstance(seed, 4, 3);
    const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), 4);
    const PredictionSet preds = ToPredictionSet(inst.preds);
    const LossBreakdown a = HungarianLoss(inst.targets, preds, inst.assignment, w, norms);
    const LossBreakdown b = HungarianLoss(inst.targets, preds, inst.assignment, w3, norms);
    CHECK(b.keypoint_l1 == doctest::Approx(3 * a.keypoint_l1).epsilon(1e-14));
    CHECK(b.class_nll == a.class_nll);
    CHECK(b.visibility_l2 == a.visibility_l2);
    CHECK(b.center_l2 == a.center_l2);
  }
}

TEST_CASE("non-object weight increases the class term") {
  LossWeights w;
  LossWeights heavy = w;
  heavy.nonobject_class_weight = 1.0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const LossInstance inst = RandomLossInstance(seed, 4, 2);
    if (inst.targets.num_humans() == 4) continue;
    const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), 4);
    const PredictionSet preds = ToPredictionSet(inst.preds);
    CHECK(HungarianLoss(inst.targets, preds, inst.assignment, heavy, norms).class_nll >
          HungarianLoss(inst.targets, preds, inst.assignment, w, norms).class_nll);
  }
}

TEST_CASE("recorded loss matches plain evaluation") {
  const LossWeights w;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    const LossInstance inst = RandomLossInstance(seed, 5, 3);
    const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), 5);
    ad::Tape tape;
    PredictionVars vars{tape.Leaf(inst.preds.class_logits), tape.Leaf(inst.preds.centers),
                        tape.Leaf(inst.preds.offsets), tape.Leaf(inst.preds.visibilities)};
    const LossBreakdown rec =
        RecordHungarianLoss(inst.targets, vars, inst.assignment, w, norms).values();
    const LossBreakdown plain =
        HungarianLoss(inst.targets, ToPredictionSet(inst.preds), inst.assignment, w, norms);
    CHECK(rec.total == doctest::Approx(plain.total).epsilon(1e-13));
    CHECK(rec.class_nll == doctest::Approx(plain.class_nll).epsilon(1e-13));
    CHECK(rec.keypoint_l1 == doctest::Approx(plain.keypoint_l1).epsilon(1e-13));
    CHECK(rec.visibility_l2 == doctest::Approx(plain.visibility_l2).epsilon(1e-13));
    CHECK(rec.center_l2 == doctest::Approx(plain.center_l2).epsilon(1e-13));
  }
}

TEST_CASE("center gradient closed form") {
  const LossWeights w;
  const LossInstance inst = RandomLossInstance(12, 4, 2);
  const int humans = inst.targets.num_humans();
  REQUIRE(humans > 0);
  const auto norms = LossNormalizers::ForBatch(humans, 4);
  const PredictionTensors g = LossGradients(inst.targets, inst.preds, inst.assignment, w, norms);
  for (int i = 0; i < 4; ++i) {
    const int j = inst.assignment.perm[static_cast<size_t>(i)];
    const PoseVector& t = inst.targets.slots[static_cast<size_t>(i)];
    const double target[2] = {t.center.x, t.center.y};
    for (int a = 0; a < 2; ++a) {
      const double expected =
          t.is_human() ? 2 * w.lambda_ctr * (inst.preds.centers.at(j, a) - target[a]) / humans : 0.0;
      CHECK(g.centers.at(j, a) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss gradients match finite differences") {
  const LossWeights w;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const LossInstance inst = RandomLossInstance(seed, rng.UniformInt(1, 6), rng.UniformInt(1, 5));
    const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), inst.targets.size());
    const PredictionTensors g = LossGradients(inst.targets, inst.preds, inst.assignment, w, norms);
    for (Tensor PredictionTensors::*m :
         {&PredictionTensors::class_logits, &PredictionTensors::centers,
          &PredictionTensors::offsets, &PredictionTensors::visibilities}) {
      const Tensor numeric = ad::FiniteDiff(
          [&](const Tensor& x) {
            PredictionTensors p = inst.preds;
            p.*m = x;
            return TotalLoss(inst, p, w);
          },
          inst.preds.*m, 1e-5);
      CHECK(ad::MaxRelativeError(g.*m, numeric) < 1e-4);
    }
  }
}

TEST_CASE("gradcheck loss component passes") {
  const GradcheckResult r = GradcheckLoss({});
  CHECK(r.passed);
  CHECK(r.max_relative_error < 1e-4);
  CHECK(r.entries_checked > 0);
}

TEST_CASE("invisible offsets are masked exactly") {
  const LossWeights w;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const LossInstance inst = RandomLossInstance(seed, rng.UniformInt(1, 6), rng.UniformInt(1, 5));
    const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), inst.targets.size());
    PredictionTensors moved = inst.preds;
    for (int i = 0; i < inst.targets.size(); ++i) {
      const PoseVector& t = inst.targets.slots[static_cast<size_t>(i)];
      if (!t.is_human()) continue;
      const int j = inst.assignment.perm[static_cast<size_t>(i)];
      for (size_t c = 0; c < t.visibilities.size(); ++c) {
        if (t.visibilities[c] == 0.0) moved.offsets.at(j, static_cast<int64_t>(c)) += rng.Normal();
      }
    }
    const LossBreakdown a =
        HungarianLoss(inst.targets, ToPredictionSet(inst.preds), inst.assignment, w, norms);
    const LossBreakdown b =
        HungarianLoss(inst.targets, ToPredictionSet(moved), inst.assignment, w, norms);
    CHECK(a.total == b.total);
    const PredictionTensors ga = LossGradients(inst.targets, inst.preds, inst.assignment, w, norms);
    const PredictionTensors gb = LossGradients(inst.targets, moved, inst.assignment, w, norms);
    CHECK(BitwiseEqual(ga.class_logits, gb.class_logits));
    CHECK(BitwiseEqual(ga.centers, gb.centers));
    CHECK(BitwiseEqual(ga.offsets, gb.offsets));
    CHECK(BitwiseEqual(ga.visibilities, gb.visibilities));
  }
}

TEST_CASE("slot permutation with re-matching preserves the loss") {
  const LossWeights w;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int n = rng.UniformInt(1, 6);
    const LossInstance inst = RandomLossInstance(seed, n, rng.UniformInt(1, 5));
    const auto norms = LossNormalizers::ForBatch(inst.targets.num_humans(), n);
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.UniformInt(0, i))]);
    }
    const PredictionSet shuffled = ToPredictionSet(PermuteSlots(inst.preds, perm));
    const Assignment rematched =
        HungarianAssign(BuildCostMatrix(inst.targets, shuffled, w));
    const double a =
        HungarianLoss(inst.targets, ToPredictionSet(inst.preds), inst.assignment, w, norms).total;
    const double b = HungarianLoss(inst.targets, shuffled, rematched, w, norms).total;
    CHECK(std::abs(a - b) <= 1e-12);
  }
}
