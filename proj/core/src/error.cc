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

#include "poet/error.h"

namespace poet {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNotScalar: return "NotScalar";
    case ErrorCode::kNotRecorded: return "NotRecorded";
    case ErrorCode::kTapeConsumed: return "TapeConsumed";
    case ErrorCode::kTooManyInstances: return "TooManyInstances";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kNonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kClassMismatch: return "ClassMismatch";
    case ErrorCode::kNoVisibleKeypoints: return "NoVisibleKeypoints";
    case ErrorCode::kBadDModel: return "BadDModel";
    case ErrorCode::kIndivisibleInput: return "IndivisibleInput";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
      code_(code),
      message_(message) {}

}  // namespace poet
