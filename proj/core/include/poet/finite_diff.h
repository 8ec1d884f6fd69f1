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

#ifndef POET_FINITE_DIFF_H_
#define POET_FINITE_DIFF_H_

#include <functional>

#include "poet/tensor.h"

namespace poet::ad {

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
// element of x.
Tensor FiniteDiff(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-4);

// Largest elementwise |a - n| / max(|a|, |n|, floor). The floor keeps
// near-zero entries from being judged on truncation noise alone.
double MaxRelativeError(const Tensor& analytic, const Tensor& numeric, double floor = 1e-3);

}  // namespace poet::ad

#endif  // POET_FINITE_DIFF_H_
