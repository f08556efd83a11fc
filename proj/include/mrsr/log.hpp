#pragma once

#include <fmt/core.h>

#include <atomic>
#include <cstdio>
#include <utility>

namespace mrsr::log {

enum class Level { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline std::atomic<int>& level_ref() {
  static std::atomic<int> level{static_cast<int>(Level::kWarn)};
  return level;
}

inline void set_level(Level l) { level_ref().store(static_cast<int>(l)); }
inline bool enabled(Level l) { return level_ref().load() >= static_cast<int>(l); }

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  if (enabled(Level::kWarn)) {
    fmt::print(stderr, "warning: {}\n", fmt::format(f, std::forward<Args>(args)...));
  }
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (enabled(Level::kInfo)) fmt::print(stderr, "{}\n", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (enabled(Level::kDebug)) {
    fmt::print(stderr, "debug: {}\n", fmt::format(f, std::forward<Args>(args)...));
  }
}

}  // namespace mrsr::log
