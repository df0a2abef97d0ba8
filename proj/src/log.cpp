#include "vsgno/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace vsgno::log {
namespace {

Level from_env() {
  const char* env = std::getenv("SPIKEGNO_LOG");
  if (env == nullptr) return Level::info;
  const std::string value(env);
  if (value == "error") return Level::error;
  if (value == "debug") return Level::debug;
  return Level::info;
}

std::atomic<int>& level_slot() {
  static std::atomic<int> slot{static_cast<int>(from_env())};
  return slot;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level threshold() { return static_cast<Level>(level_slot().load()); }

void set_threshold(Level level) { level_slot().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
  if (static_cast<int>(level) > level_slot().load()) return;
  static constexpr const char* tags[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[" << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace vsgno::log
