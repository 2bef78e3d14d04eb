#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace piie::log {

enum class Level { debug = 0, info = 1, warning = 2, error = 3, off = 4 };

using Sink = std::function<void(Level, std::string_view)>;

namespace detail {

struct State {
  std::mutex mu;
  Level threshold = Level::warning;
  Sink sink = [](Level level, std::string_view msg) {
    static constexpr const char* names[] = {"debug", "info", "warning", "error"};
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
  };
};

inline State& state() {
  static State s;
  return s;
}

}  // namespace detail

inline void set_level(Level level) {
  std::lock_guard lock(detail::state().mu);
  detail::state().threshold = level;
}

inline Level level() {
  std::lock_guard lock(detail::state().mu);
  return detail::state().threshold;
}

// Replaces the sink; returns the previous one so tests can restore it.
inline Sink set_sink(Sink sink) {
  std::lock_guard lock(detail::state().mu);
  std::swap(detail::state().sink, sink);
  return sink;
}

inline void write(Level lvl, std::string_view msg) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  if (lvl < s.threshold || !s.sink) return;
  s.sink(lvl, msg);
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warning(std::string_view msg) { write(Level::warning, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

}  // namespace piie::log
