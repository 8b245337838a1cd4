#include "sepstream/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace sepstream {

namespace {

LogLevel level_from_env() {
    const char* raw = std::getenv("SEPSTREAM_LOG");
    if (!raw)
        return LogLevel::quiet;
    const std::string_view v(raw);
    if (v == "debug" || v == "2")
        return LogLevel::debug;
    if (v == "info" || v == "1")
        return LogLevel::info;
    return LogLevel::quiet;
}

std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

void emit(const char* tag, const std::string& message) {
    std::lock_guard lock(log_mutex());
    std::cerr << tag << message << '\n';
}

} // namespace

LogLevel log_level() {
    static const LogLevel level = level_from_env();
    return level;
}

void log_info(const std::string& message) {
    if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::info))
        emit("[info] ", message);
}

void log_debug(const std::string& message) {
    if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::debug))
        emit("[debug] ", message);
}

} // namespace sepstream
