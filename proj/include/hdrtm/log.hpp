#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string_view>

namespace hdrtm::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::Info};
  return level;
}

inline void set_level(Level level) { threshold().store(level); }

template <class... Args>
void write(Level level, std::string_view tag, const Args&... args) {
  if (level < threshold().load()) return;
  std::ostringstream line;
  line << "[" << tag << "] ";
  (line << ... << args);
  line << "\n";
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << line.str();
}

template <class... Args>
void info(const Args&... args) { write(Level::Info, "info", args...); }
template <class... Args>
void warn(const Args&... args) { write(Level::Warn, "warn", args...); }
template <class... Args>
void error(const Args&... args) { write(Level::Error, "error", args...); }

}  // namespace hdrtm::log
