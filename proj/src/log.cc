// src/log.cc
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "scriptine/log.h"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace scriptine {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SCRIPTINE_LOG");
    if (env == nullptr) return LogLevel::kWarn;
    const std::string_view v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& text) {
  static std::mutex mu;
  static constexpr const char* kNames[] = {"ERROR", "WARN", "INFO", "DEBUG"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << kNames[static_cast<int>(level)] << "] " << text << '\n';
}

}  // namespace scriptine
