#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace obsv {

enum class LogLevel { Debug = 0, Info, Warn, Error, Off };

/// Level comes from OBSV_LOG (debug|info|warn|error|off); default warn.
inline LogLevel log_level() {
    static const LogLevel lv = [] {
        const char* e = std::getenv("OBSV_LOG");
        if (!e) return LogLevel::Warn;
        if (!std::strcmp(e, "debug")) return LogLevel::Debug;
        if (!std::strcmp(e, "info")) return LogLevel::Info;
        if (!std::strcmp(e, "warn")) return LogLevel::Warn;
        if (!std::strcmp(e, "error")) return LogLevel::Error;
        if (!std::strcmp(e, "off")) return LogLevel::Off;
        return LogLevel::Warn;
    }();
    return lv;
}

template <typename... Args>
inline void log_at(LogLevel lvl, const char* tag, const char* fmt, Args... args) {
    if (lvl < log_level()) return;
    std::fprintf(stderr, "[obsv %s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

template <typename... Args>
inline void log_debug(const char* fmt, Args... args) { log_at(LogLevel::Debug, "debug", fmt, args...); }
template <typename... Args>
inline void log_info(const char* fmt, Args... args) { log_at(LogLevel::Info, "info", fmt, args...); }
template <typename... Args>
inline void log_warn(const char* fmt, Args... args) { log_at(LogLevel::Warn, "warn", fmt, args...); }

}  // namespace obsv
