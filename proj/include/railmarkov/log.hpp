#pragma once

// Minimal stderr logger. Level comes from RAILMARKOV_LOG
// (error|warn|info|debug), default warn.

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace railmarkov::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline Level level_from_env() {
  const char* env = std::getenv("RAILMARKOV_LOG");
  if (!env) return Level::Warn;
  std::string s(env);
  if (s == "error") return Level::Error;
  if (s == "warn") return Level::Warn;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return Level::Warn;
}

inline Level& threshold() {
  static Level lvl = level_from_env();
  return lvl;
}

inline std::mutex& mu() {
  static std::mutex m;
  return m;
}

inline void emit(Level lvl, const std::string& msg) {
  if (lvl > threshold()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lk(mu());
  std::cerr << "[railmarkov:" << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}

inline void error(const std::string& msg) { emit(Level::Error, msg); }
inline void warn(const std::string& msg) { emit(Level::Warn, msg); }
inline void info(const std::string& msg) { emit(Level::Info, msg); }
inline void debug(const std::string& msg) { emit(Level::Debug, msg); }

}  // namespace railmarkov::log
