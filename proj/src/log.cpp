#include "dcosim/log.hpp"

#include <chrono>
#include <cstdio>
#include <mutex>

namespace dcosim::log {

namespace {

std::mutex g_mutex;

void write_stderr(std::string_view line)
{
    std::fwrite(line.data(), 1, line.size(), stderr);
    std::fputc('\n', stderr);
}

Sink& sink()
{
    static Sink s = write_stderr;
    return s;
}

} // namespace

Sink set_sink(Sink next)
{
    std::lock_guard lock(g_mutex);
    auto previous = std::move(sink());
    sink() = next ? std::move(next) : Sink(write_stderr);
    return previous;
}

void event(std::string_view event, std::string_view unit, std::string_view detail)
{
    const auto now = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    char stamp[32];
    std::snprintf(stamp, sizeof(stamp), "%.6f", now);

    std::string line = "ts=";
    line += stamp;
    line += " EVENT=";
    line += event;
    line += " unit=";
    line += unit;
    if (!detail.empty()) {
        line += ' ';
        line += detail;
    }
    std::lock_guard lock(g_mutex);
    sink()(line);
}

} // namespace dcosim::log
