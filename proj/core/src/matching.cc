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

#include "poet/matching.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "poet/error.h"
#include "poet/loss.h"

namespace poet {

CostMatrix::CostMatrix(int n, std::vector<double> entries) : n_(n), entries_(std::move(entries)) {
  if (static_cast<size_t>(n) * static_cast<size_t>(n) != entries_.size()) {
    throw Error(ErrorCode::kSizeMismatch, "cost matrix of order " + std::to_string(n) +
                                              " given " + std::to_string(entries_.size()) +
                                              " entries");
  }
}

double AssignmentCost(const CostMatrix& cost, const std::vector<int>& perm) {
  double total = 0.0;
  for (int i = 0; i < cost.n(); ++i) total += cost(i, perm[static_cast<size_t>(i)]);
  return total;
}

double MatchCost(const PoseVector& target, const PredictionSlot& pred, const LossWeights& weights) {
  if (!target.is_human()) return 0.0;
  return -pred.prob(PoseClass::kHuman) + PoseLoss(target, pred.pose, weights).total();
}

CostMatrix BuildCostMatrix(const TargetSet& targets, const PredictionSet& preds,
                           const LossWeights& weights) {
  if (targets.size() != static_cast<int>(preds.size())) {
    throw Error(ErrorCode::kSizeMismatch, std::to_string(targets.size()) + " targets vs " +
                                              std::to_string(preds.size()) + " predictions");
  }
  const int n = targets.size();
  CostMatrix cost(n);
  for (int i = 0; i < n; ++i) {
    const PoseVector& t = targets.slots[static_cast<size_t>(i)];
    if (!t.is_human()) continue;
    for (int j = 0; j < n; ++j) cost(i, j) = MatchCost(t, preds[static_cast<size_t>(j)], weights);
  }
  return cost;
}

Assignment HungarianAssign(const CostMatrix& cost) {
  const int n = cost.n();
  for (double c : cost.entries()) {
    if (!std::isfinite(c)) throw Error(ErrorCode::kNonFiniteEntry, "cost matrix entry is not finite");
  }
  Assignment result;
  if (n == 0) return result;

  // 1-based arrays; index 0 is the virtual source column.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int> row_of_col(static_cast<size_t>(n + 1), 0);
  std::vector<int> way(static_cast<size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), kInf);
    std::vector<char> used(static_cast<size_t>(n + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = row_of_col[static_cast<size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double reduced =
            cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (reduced < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = reduced;
          way[static_cast<size_t>(j)] = j0;
        }
        // Strict comparison keeps the smallest column index among ties.
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(row_of_col[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      row_of_col[static_cast<size_t>(j0)] = row_of_col[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  result.perm.assign(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    result.perm[static_cast<size_t>(row_of_col[static_cast<size_t>(j)] - 1)] = j - 1;
  }
  result.total_cost = AssignmentCost(cost, result.perm);
  return result;
}

Assignment BruteForceAssign(const CostMatrix& cost) {
  const int n = cost.n();
  if (n > 8) {
    throw Error(ErrorCode::kTooLarge,
                "brute force assignment limited to n <= 8, got " + std::to_string(n));
  }
  for (double c : cost.entries()) {
    if (!std::isfinite(c)) throw Error(ErrorCode::kNonFiniteEntry, "cost matrix entry is not finite");
  }
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best{perm, AssignmentCost(cost, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double c = AssignmentCost(cost, perm);
    if (c < best.total_cost) best = {perm, c};
  }
  return best;
}

}  // namespace poet
