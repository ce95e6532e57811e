#include "dnet/log.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <iostream>
#include <mutex>

#include "dnet/error.hpp"

namespace dnet {
namespace {
std::atomic<LogLevel> g_level{LogLevel::Warning};
std::mutex g_log_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_info(std::string_view message) {
  if (g_level.load() < LogLevel::Info) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << message << '\n';
}

void log_warning(std::string_view message) {
  if (g_level.load() < LogLevel::Warning) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "warning: " << message << '\n';
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (text == "inf" || text == "+inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  if (text == "nan") return NAN;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw InvalidArgument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace dnet
