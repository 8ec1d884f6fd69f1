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

#include "poet/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "poet/error.h"

namespace poet {
namespace {

constexpr char kMagic[4] = {'P', 'O', 'E', 'T'};

template <typename T>
void PutLittleEndian(std::string& out, T value) {
  uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<uint64_t>(value);
  } else {
    bits = static_cast<uint64_t>(value);
  }
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T Get() {
    Need(sizeof(T));
    uint64_t bits = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::string GetBytes(size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void Need(size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kParseError,
                  "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string EncodeCheckpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, sizeof(kMagic));
  PutLittleEndian<uint32_t>(out, kCheckpointVersion);
  for (const NamedTensor& t : tensors) {
    PutLittleEndian<uint32_t>(out, static_cast<uint32_t>(t.name.size()));
    out += t.name;
    PutLittleEndian<uint32_t>(out, static_cast<uint32_t>(t.value.rank()));
    for (int64_t d : t.value.shape()) PutLittleEndian<uint64_t>(out, static_cast<uint64_t>(d));
    for (double v : t.value.data()) PutLittleEndian<double>(out, v);
  }
  return out;
}

std::vector<NamedTensor> DecodeCheckpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kParseError, "missing POET magic bytes");
  }
  Reader in(bytes);
  in.GetBytes(4);
  const uint32_t version = in.Get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (!in.done()) {
    NamedTensor t;
    t.name = in.GetBytes(in.Get<uint32_t>());
    const uint32_t rank = in.Get<uint32_t>();
    ad::Shape shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int64_t>(in.Get<uint64_t>()));
    std::vector<double> data(static_cast<size_t>(ad::NumElements(shape)));
    for (double& v : data) v = in.Get<double>();
    t.value = ad::Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  return out;
}

void WriteCheckpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  const std::string bytes = EncodeCheckpoint(tensors);
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

std::vector<NamedTensor> ReadCheckpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return DecodeCheckpoint(buffer.str());
}

const NamedTensor* FindTensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace poet
