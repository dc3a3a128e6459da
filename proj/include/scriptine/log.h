// include/scriptine/log.h
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

#pragma once

#include <sstream>
#include <string>

namespace scriptine {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from the SCRIPTINE_LOG environment variable
// (error|warn|info|debug, default warn).
LogLevel log_level();
void log_message(LogLevel level, const std::string& text);

}  // namespace scriptine

#define SCRIPTINE_LOG(level, expr)                                   \
  do {                                                               \
    if (static_cast<int>(level) <= static_cast<int>(::scriptine::log_level())) { \
      std::ostringstream scriptine_log_os_;                          \
      scriptine_log_os_ << expr;                                     \
      ::scriptine::log_message(level, scriptine_log_os_.str());      \
    }                                                                \
  } while (0)

#define SCRIPTINE_WARN(expr) SCRIPTINE_LOG(::scriptine::LogLevel::kWarn, expr)
#define SCRIPTINE_INFO(expr) SCRIPTINE_LOG(::scriptine::LogLevel::kInfo, expr)
#define SCRIPTINE_DEBUG(expr) SCRIPTINE_LOG(::scriptine::LogLevel::kDebug, expr)
