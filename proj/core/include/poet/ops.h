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

#ifndef POET_OPS_H_
#define POET_OPS_H_

#include <span>
#include <vector>

#include "poet/random.h"
#include "poet/tape.h"

// Differentiable operations on tape-recorded values. Unless stated otherwise,
// 2-D operands are row-major [rows x cols]. Broadcasting is limited to adding
// a row vector across the leading dimension.
namespace poet::ad {

Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double factor);
// a [M x N] + b [N] on every row.
Var AddRowVector(const Var& a, const Var& b);

// a [M x K] * b [K x N].
Var MatMul(const Var& a, const Var& b);
// a [M x K] * b^T for b [N x K].
Var MatMulTransposed(const Var& a, const Var& b);
Var Transpose(const Var& a);
Var Reshape(const Var& a, Shape shape);
// Concatenation of 2-D values along axis 0 (rows) or 1 (columns).
Var Concat(std::span<const Var> parts, int axis);
// Half-open range [begin, end) along axis 0 or 1 of a 2-D value.
Var Slice(const Var& a, int axis, int64_t begin, int64_t end);
// out[i] = a[rows[i]] for a 2-D value; rows may repeat.
Var GatherRows(const Var& a, std::span<const int> rows);

Var Relu(const Var& a);
Var Sigmoid(const Var& a);
Var Tanh(const Var& a);
Var Abs(const Var& a);
Var Square(const Var& a);
// log(max(a, floor)); the gradient is zero where the floor is active.
Var ClampedLog(const Var& a, double floor);

// Softmax of a 2-D value along axis 1 (each row) or axis 0 (each column).
Var Softmax(const Var& a, int axis);
// Normalizes each row of x [M x N] then applies gain [N] and bias [N].
Var LayerNorm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// Inverted dropout. Returns `a` unchanged when !train or rate == 0.
Var Dropout(const Var& a, double rate, bool train, Rng& rng);

Var Sum(const Var& a);
Var Mean(const Var& a);

// x [C x H x W], weight [O x C x kh x kw], bias [O] -> [O x Ho x Wo].
Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);

}  // namespace poet::ad

#endif  // POET_OPS_H_
