#include "fineparser/log.h"

#include <atomic>
#include <iostream>
#include <mutex>

namespace fineparser::log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

const char* tag(Level l) {
  switch (l) {
    case Level::debug:
      return "debug";
    case Level::info:
      return "info";
    case Level::warn:
      return "warn";
    case Level::error:
      return "error";
    case Level::off:
      break;
  }
  return "";
}
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void write(Level l, std::string_view message) {
  if (l < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::clog << '[' << tag(l) << "] " << message << '\n';
}

}  // namespace fineparser::log
