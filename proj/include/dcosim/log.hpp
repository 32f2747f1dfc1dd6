#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace dcosim::log {

/// Receives fully formatted lines, without trailing newline.
using Sink = std::function<void(std::string_view line)>;

/// Replaces the sink; returns the previous one. The default writes to stderr.
Sink set_sink(Sink sink);

/// Emits `ts=<unix seconds> EVENT=<event> unit=<unit> <detail>`.
void event(std::string_view event, std::string_view unit, std::string_view detail = {});

} // namespace dcosim::log
