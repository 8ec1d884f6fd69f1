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

#include "poet/tensor.h"

#include <sstream>
#include <utility>

#include "poet/error.h"

namespace poet::ad {

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw Error(ErrorCode::kShapeMismatch, "negative dimension in " + ShapeString(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(NumElements(shape_)), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (NumElements(shape_) != static_cast<int64_t>(data_.size())) {
    throw Error(ErrorCode::kShapeMismatch,
                "shape " + ShapeString(shape_) + " does not hold " +
                    std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = value;
  return t;
}

Tensor Tensor::FromRows(std::initializer_list<std::initializer_list<double>> rows) {
  const int64_t r = static_cast<int64_t>(rows.size());
  const int64_t c = r ? static_cast<int64_t>(rows.begin()->size()) : 0;
  std::vector<double> data;
  data.reserve(static_cast<size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<int64_t>(row.size()) != c) {
      throw Error(ErrorCode::kShapeMismatch, "ragged rows in FromRows");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorCode::kNotScalar, "item() on tensor of shape " + ShapeString(shape_));
  }
  return data_[0];
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

}  // namespace poet::ad
