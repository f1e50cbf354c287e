#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace cohesim {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Quiet = 4 };

/// Level comes from COHESIM_LOG (debug|info|warn|error|quiet); default warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("COHESIM_LOG");
    if (!env) return LogLevel::Warn;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    if (std::strcmp(env, "info") == 0) return LogLevel::Info;
    if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::Error;
    if (std::strcmp(env, "quiet") == 0) return LogLevel::Quiet;
    return LogLevel::Warn;
  }();
  return level;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
  if (lvl < log_level()) return;
  std::fprintf(stderr, "[%s] ", tag);
  if constexpr (sizeof...(Args) == 0)
    std::fputs(fmt, stderr);
  else
    std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

#define COHESIM_LOG_DEBUG(...) ::cohesim::log_at(::cohesim::LogLevel::Debug, "debug", __VA_ARGS__)
#define COHESIM_LOG_INFO(...) ::cohesim::log_at(::cohesim::LogLevel::Info, "info", __VA_ARGS__)
#define COHESIM_LOG_WARN(...) ::cohesim::log_at(::cohesim::LogLevel::Warn, "warn", __VA_ARGS__)
#define COHESIM_LOG_ERROR(...) ::cohesim::log_at(::cohesim::LogLevel::Error, "error", __VA_ARGS__)

}  // namespace cohesim
