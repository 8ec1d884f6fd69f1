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

#ifndef POET_LOG_H_
#define POET_LOG_H_

#include <string>

namespace poet {

// Reads POET_LOG (trace, debug, info, warn, error, off) once and configures
// the default logger; `info` when unset. Safe to call repeatedly.
void InitLogging();

// Overrides the level from code, e.g. for quiet tests.
void SetLogLevel(const std::string& level);

void LogInfo(const std::string& message);
void LogWarn(const std::string& message);
void LogDebug(const std::string& message);

}  // namespace poet

#endif  // POET_LOG_H_
