#include "sgmlab/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace sgmlab::log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void info(std::string_view msg) {
  if (g_level > Level::info) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[info] " << msg << '\n';
}

void warn(std::string_view msg) {
  if (g_level > Level::warn) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[warn] " << msg << '\n';
}

}  // namespace sgmlab::log
