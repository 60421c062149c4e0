#include "dialmt/log.hpp"

#include <cstdlib>

namespace dialmt {

static LogLevel parse_level(const char* s) {
  if (!s) return LogLevel::warn;
  std::string v(s);
  if (v == "error" || v == "0") return LogLevel::error;
  if (v == "warn" || v == "1") return LogLevel::warn;
  if (v == "info" || v == "2") return LogLevel::info;
  if (v == "debug" || v == "3") return LogLevel::debug;
  return LogLevel::warn;
}

LogLevel log_level() {
  static LogLevel lv = parse_level(std::getenv("DIALMT_LOG"));
  return lv;
}

void log_line(LogLevel lv, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(lv)] << "] " << msg << "\n";
}

}  // namespace dialmt
