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

#ifndef POET_TENSOR_H_
#define POET_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace poet::ad {

using Shape = std::vector<int64_t>;

std::string ShapeString(const Shape& shape);
int64_t NumElements(const Shape& shape);

/// Dense row-major array of 64-bit floats. The shape is fixed at
/// construction; reshaping produces a new tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  static Tensor Full(Shape shape, double value);
  static Tensor FromRows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

  // 2-D accessors; the tensor must have rank 2.
  double at(int64_t row, int64_t col) const {
    return data_[static_cast<size_t>(row * shape_[1] + col)];
  }
  double& at(int64_t row, int64_t col) {
    return data_[static_cast<size_t>(row * shape_[1] + col)];
  }

  // Value of a single-element tensor.
  double item() const;

  Tensor Reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace poet::ad

#endif  // POET_TENSOR_H_
