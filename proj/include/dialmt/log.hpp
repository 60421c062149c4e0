#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace dialmt {

// Verbosity comes from the DIALMT_LOG environment variable:
// "error", "warn" (default), "info" or "debug".
enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level();

inline bool log_enabled(LogLevel lv) { return static_cast<int>(lv) <= static_cast<int>(log_level()); }

void log_line(LogLevel lv, const std::string& msg);

}  // namespace dialmt

#define DIALMT_LOG_AT(lv, expr)                         \
  do {                                                  \
    if (::dialmt::log_enabled(lv)) {                    \
      std::ostringstream oss_;                          \
      oss_ << expr;                                     \
      ::dialmt::log_line(lv, oss_.str());               \
    }                                                   \
  } while (0)

#define LOG_ERROR(expr) DIALMT_LOG_AT(::dialmt::LogLevel::error, expr)
#define LOG_WARN(expr) DIALMT_LOG_AT(::dialmt::LogLevel::warn, expr)
#define LOG_INFO(expr) DIALMT_LOG_AT(::dialmt::LogLevel::info, expr)
#define LOG_DEBUG(expr) DIALMT_LOG_AT(::dialmt::LogLevel::debug, expr)
