#pragma once

#include <string>

namespace mmtrack::cli {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

/// Read once from MMTRACK_LOG (quiet, info, debug); defaults to info.
LogLevel log_level();

/// Diagnostics go to stderr so stdout stays machine-readable.
void log_info(const std::string& message);
void log_debug(const std::string& message);
void log_error(const std::string& message);

}  // namespace mmtrack::cli
