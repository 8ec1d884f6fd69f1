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

#include "poet/log.h"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <mutex>

#include "poet/error.h"

namespace poet {

namespace {

std::once_flag init_once;

spdlog::level::level_enum ParseLevel(const std::string& level) {
  const auto parsed = spdlog::level::from_str(level);
  // from_str maps unknown names to off; only accept that for "off" itself.
  if (parsed == spdlog::level::off && level != "off") {
    throw Error(ErrorCode::kInvalidConfig, "unknown log level '" + level + "'");
  }
  return parsed;
}

void Configure() {
  auto logger = spdlog::stderr_color_mt("poet");
  logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("POET_LOG")) {
    try {
      spdlog::set_level(ParseLevel(env));
    } catch (const Error&) {
      spdlog::warn("ignoring POET_LOG='{}'", env);
    }
  }
}

}  // namespace

void InitLogging() { std::call_once(init_once, Configure); }

void SetLogLevel(const std::string& level) {
  InitLogging();
  spdlog::set_level(ParseLevel(level));
}

void LogInfo(const std::string& message) {
  InitLogging();
  spdlog::info("{}", message);
}

void LogWarn(const std::string& message) {
  InitLogging();
  spdlog::warn("{}", message);
}

void LogDebug(const std::string& message) {
  InitLogging();
  spdlog::debug("{}", message);
}

}  // namespace poet
