#pragma once

#include <string>

namespace sepstream {

// Verbosity comes from the SEPSTREAM_LOG environment variable:
// unset/empty or "quiet" -> warnings only, "info"/"1" -> progress
// lines, "debug"/"2" -> everything. Output goes to stderr so it never
// mixes with exported data on stdout.

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_info(const std::string& message);
void log_debug(const std::string& message);

} // namespace sepstream
