#pragma once

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace retinex {

/// Process-wide logger writing to stderr. Level comes from RETINEX_LOG_LEVEL
/// (error, warn, info, debug); default info.
inline spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto lg = std::make_shared<spdlog::logger>("retinex", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    lg->set_pattern("[%l] %v");
    auto level = spdlog::level::info;
    if (const char* env = std::getenv("RETINEX_LOG_LEVEL")) {
      const std::string s(env);
      if (s == "error") level = spdlog::level::err;
      else if (s == "warn") level = spdlog::level::warn;
      else if (s == "info") level = spdlog::level::info;
      else if (s == "debug") level = spdlog::level::debug;
    }
    lg->set_level(level);
    return lg;
  }();
  return *instance;
}

}  // namespace retinex
