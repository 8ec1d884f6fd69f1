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

#ifndef POET_ERROR_H_
#define POET_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace poet {

enum class ErrorCode {
  kShapeMismatch,
  kNotScalar,
  kNotRecorded,
  kTapeConsumed,
  kTooManyInstances,
  kSizeMismatch,
  kNonFiniteEntry,
  kTooLarge,
  kClassMismatch,
  kNoVisibleKeypoints,
  kBadDModel,
  kIndivisibleInput,
  kParseError,
  kMissingField,
  kInvalidConfig,
  kIoError,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace poet

#endif  // POET_ERROR_H_
