#pragma once

#include <memory>
#include <utility>

#include <spdlog/spdlog.h>

namespace shardjoin {

// Process-wide stderr logger. Level comes from SHARDJOIN_LOG
// (trace|debug|info|warn|error|off); default warn.
spdlog::logger& logger();

template <typename... Args>
void log_debug(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().debug(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void log_info(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void log_warn(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().warn(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void log_error(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().error(fmt, std::forward<Args>(args)...);
}

} // namespace shardjoin
