#include "shardjoin/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace shardjoin {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = std::make_shared<spdlog::logger>("shardjoin",
                                              std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_pattern("[%H:%M:%S.%e] [%l] %v");
    const char* env = std::getenv("SHARDJOIN_LOG");
    l->set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return *instance;
}

} // namespace shardjoin
