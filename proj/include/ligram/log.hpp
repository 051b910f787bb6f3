#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace ligram::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level parse_level(std::string_view v) {
    if (v == "error" || v == "quiet") return Level::error;
    if (v == "warn") return Level::warn;
    if (v == "debug") return Level::debug;
    return Level::info;
}

// Initial verbosity comes from LIGRAM_LOG (error|warn|info|debug); default is info.
inline Level& threshold_ref() {
    static Level level = [] {
        const char* env = std::getenv("LIGRAM_LOG");
        return env == nullptr ? Level::info : parse_level(env);
    }();
    return level;
}

inline Level threshold() { return threshold_ref(); }
inline void set_threshold(Level level) { threshold_ref() = level; }

inline void write(Level level, std::string_view tag, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(threshold())) return;
    std::cerr << "[" << tag << "] " << msg << '\n';
}

inline void error(const std::string& msg) { write(Level::error, "error", msg); }
inline void warn(const std::string& msg) { write(Level::warn, "warn", msg); }
inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }

} // namespace ligram::log
