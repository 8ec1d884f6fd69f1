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

#include "poet/tape.h"

#include <atomic>
#include <utility>

#include "poet/error.h"

namespace poet::ad {

const Tensor& Var::value() const {
  if (!tape_) throw Error(ErrorCode::kNotRecorded, "value() on an empty Var");
  return tape_->Value(id_);
}

const Tensor* Gradients::Find(int node_id) const {
  auto it = grads_.find(node_id);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor Gradients::Of(const Var& v) const {
  if (const Tensor* g = Find(v.id())) return *g;
  return Tensor(v.shape());
}

Var Tape::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::Constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  node.is_leaf = true;
  return Push(std::move(node));
}

Var Tape::Leaf(Tensor value) {
  Node node;
  node.owned = std::move(value);
  node.is_leaf = true;
  node.requires_grad = true;
  return Push(std::move(node));
}

Var Tape::Parameter(const Tensor& value, bool requires_grad) {
  Node node;
  node.external = &value;
  node.is_leaf = true;
  node.requires_grad = requires_grad;
  return Push(std::move(node));
}

Var Tape::Record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (consumed_) throw Error(ErrorCode::kTapeConsumed, "recording on a tape after backward");
  Node node;
  node.owned = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw Error(ErrorCode::kNotRecorded, "op input belongs to a different tape");
    }
    node.requires_grad = node.requires_grad || RequiresGrad(in);
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return Push(std::move(node));
}

const Tensor& Tape::Value(int id) const {
  const Node& n = nodes_.at(static_cast<size_t>(id));
  return n.external ? *n.external : n.owned;
}

double* Tape::GradBuffer(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(static_cast<size_t>(Value(id).size()), 0.0);
  return n.grad.data();
}

Gradients Tape::Backward(const Var& loss) {
  if (consumed_) throw Error(ErrorCode::kTapeConsumed, "backward already ran on this tape");
  if (loss.tape() != this) {
    throw Error(ErrorCode::kNotRecorded, "loss was not recorded on this tape");
  }
  if (loss.value().size() != 1) {
    throw Error(ErrorCode::kNotScalar, "loss has shape " + ShapeString(loss.shape()));
  }
  if (!RequiresGrad(loss)) {
    throw Error(ErrorCode::kNotRecorded, "loss does not depend on any differentiable leaf");
  }
  consumed_ = true;
  GradBuffer(loss.id())[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() || !n.backward) continue;
    std::vector<double> g = std::move(n.grad);
    n.backward(*this, g);
    n.backward = nullptr;
  }
  Gradients out;
  for (size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (!n.is_leaf || !n.requires_grad) continue;
    const Shape& shape = Value(static_cast<int>(id)).shape();
    if (n.grad.empty()) {
      out.grads_.emplace(static_cast<int>(id), Tensor(shape));
    } else {
      out.grads_.emplace(static_cast<int>(id), Tensor(shape, std::move(n.grad)));
    }
  }
  return out;
}

namespace testing {
namespace {
std::atomic<bool> g_corrupt{false};
}  // namespace
void SetBackwardCorruption(bool enabled) { g_corrupt = enabled; }
bool BackwardCorruption() { return g_corrupt.load(); }
}  // namespace testing

}  // namespace poet::ad
