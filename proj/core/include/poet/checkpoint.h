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

#ifndef POET_CHECKPOINT_H_
#define POET_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "poet/tensor.h"

namespace poet {

struct NamedTensor {
  std::string name;
  ad::Tensor value;
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary container: the bytes "POET", a little-endian u32 version, then for
// each tensor until end of input:
//   u32 name length, name bytes, u32 rank, rank x u64 dims,
//   product(dims) x f64 little-endian values.
std::string EncodeCheckpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> DecodeCheckpoint(const std::string& bytes);

void WriteCheckpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> ReadCheckpoint(const std::string& path);

const NamedTensor* FindTensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace poet

#endif  // POET_CHECKPOINT_H_
