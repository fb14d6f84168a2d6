#include "cage/app/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace cage::app {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CAGE_LOG");
        const std::string_view v = env ? env : "";
        if (v == "quiet") return LogLevel::Quiet;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

namespace {

void emit(LogLevel level, std::string_view tag, const std::string& message) {
    if (static_cast<int>(log_level()) < static_cast<int>(level)) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[" << tag << "] " << message << '\n';
}

}  // namespace

void log_warn(const std::string& message) { emit(LogLevel::Warn, "warn", message); }
void log_info(const std::string& message) { emit(LogLevel::Info, "info", message); }
void log_debug(const std::string& message) { emit(LogLevel::Debug, "debug", message); }

}  // namespace cage::app
