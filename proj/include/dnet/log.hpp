#pragma once

#include <string>
#include <string_view>

namespace dnet {

enum class LogLevel { Quiet = 0, Warning = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Human-readable diagnostics; always written to standard error.
void log_info(std::string_view message);
void log_warning(std::string_view message);

// Shortest decimal text that parses back to the same double; "inf"/"-inf"/"nan"
// for non-finite values.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace dnet
