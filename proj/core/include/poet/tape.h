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

#ifndef POET_TAPE_H_
#define POET_TAPE_H_

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "poet/tensor.h"

namespace poet::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Gradients of a scalar with respect to every gradient-requiring leaf of the
// tape, keyed by node id.
class Gradients {
 public:
  const Tensor* Find(int node_id) const;
  // Zero tensor shaped like `v` when no gradient reached it.
  Tensor Of(const Var& v) const;
  size_t size() const { return grads_.size(); }
  const std::map<int, Tensor>& all() const { return grads_; }

 private:
  friend class Tape;
  std::map<int, Tensor> grads_;
};

// Append-only record of operations for reverse-mode differentiation. Nodes
// are stored in creation order, which is a topological order. One backward
// pass per tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape& tape, std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  Var Leaf(Tensor value);
  // Leaf that aliases caller-owned storage; `value` must outlive the tape.
  Var Parameter(const Tensor& value, bool requires_grad = true);

  // Used by op implementations. `backward` is dropped when no input needs a
  // gradient.
  Var Record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var Record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return Record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& Value(int id) const;
  bool RequiresGrad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  bool RequiresGrad(const Var& v) const { return RequiresGrad(v.id()); }

  // Accumulation buffer for node `id` during backward, or nullptr when the
  // node does not need a gradient.
  double* GradBuffer(int id);

  Gradients Backward(const Var& loss);

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  Var Push(Node node);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

namespace testing {
// Deliberately perturbs the matmul backward pass; exists so gradient-check
// harnesses can demonstrate that they detect a broken derivative.
void SetBackwardCorruption(bool enabled);
bool BackwardCorruption();
}  // namespace testing

}  // namespace poet::ad

#endif  // POET_TAPE_H_
