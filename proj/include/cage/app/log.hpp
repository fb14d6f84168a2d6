#pragma once

#include <string>

namespace cage::app {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

// Read once from CAGE_LOG (quiet, warn, info, debug); defaults to warn.
LogLevel log_level();

void log_warn(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace cage::app
