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

#ifndef POET_MATCHING_H_
#define POET_MATCHING_H_

#include <vector>

#include "poet/pose.h"

namespace poet {

// Weights of the pose loss terms and the class-weight applied to non-object
// targets in the class log-likelihood.
struct LossWeights {
  double lambda_l1 = 4.0;
  double lambda_l2 = 0.2;
  double lambda_ctr = 0.5;
  double nonobject_class_weight = 0.1;
};

// Square matrix of matching costs, entry (i, j) = cost of assigning
// prediction j to target i.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(int n) : n_(n), entries_(static_cast<size_t>(n) * static_cast<size_t>(n)) {}
  CostMatrix(int n, std::vector<double> entries);

  int n() const { return n_; }
  double operator()(int i, int j) const { return entries_[static_cast<size_t>(i * n_ + j)]; }
  double& operator()(int i, int j) { return entries_[static_cast<size_t>(i * n_ + j)]; }
  const std::vector<double>& entries() const { return entries_; }

 private:
  int n_ = 0;
  std::vector<double> entries_;
};

struct Assignment {
  // perm[i] is the prediction matched to target i.
  std::vector<int> perm;
  double total_cost = 0.0;
};

// Sum of cost(i, perm[i]) in row order.
double AssignmentCost(const CostMatrix& cost, const std::vector<int>& perm);

// -p(human) + pose loss for a human target; zero for a non-object target.
double MatchCost(const PoseVector& target, const PredictionSlot& pred, const LossWeights& weights);

// Throws kSizeMismatch unless both sets have the same number of slots. Works
// on plain values only, so it never touches a gradient tape.
CostMatrix BuildCostMatrix(const TargetSet& targets, const PredictionSet& preds,
                           const LossWeights& weights);

// Minimum-cost perfect matching in O(n^3) using row/column potentials and
// shortest augmenting paths. Ties resolve toward smaller prediction indices,
// so the result is deterministic. Throws kNonFiniteEntry on NaN or inf.
Assignment HungarianAssign(const CostMatrix& cost);

// Exhaustive search over all n! permutations in lexicographic order, keeping
// the first minimum. Throws kTooLarge for n > 8.
Assignment BruteForceAssign(const CostMatrix& cost);

}  // namespace poet

#endif  // POET_MATCHING_H_
