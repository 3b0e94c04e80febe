#include "log.hpp"

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace mmtrack::cli {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MMTRACK_LOG");
    if (!env) return LogLevel::Info;
    const std::string_view v(env);
    if (v == "quiet" || v == "0") return LogLevel::Quiet;
    if (v == "debug" || v == "2") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::Info) std::cerr << "[mmtrack] " << message << '\n';
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::Debug) std::cerr << "[mmtrack:debug] " << message << '\n';
}

void log_error(const std::string& message) { std::cerr << "mmtrack: error: " << message << '\n'; }

}  // namespace mmtrack::cli
