#pragma once

#include "dcosim/model.hpp"
#include "dcosim/net.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

namespace dcosim::backend {

struct BackendConfig {
    std::string proxy_address;
    std::string instance_name;
    std::string auth_token;
    std::chrono::milliseconds reply_delay{0}; // slept before every message sent, handshake included
    int connect_attempts = 5;
    std::chrono::milliseconds retry_interval{500};
    net::Seconds handshake_timeout{120.0};
};

enum class Outcome {
    Freed,                 // FREE_INSTANCE served
    ClosedByPeer,          // proxy closed the connection between requests
    ConnectFailed,
    AuthenticationRejected,
    ProtocolFailure,
};

std::string_view to_string(Outcome outcome) noexcept;

/// Process exit code for an outcome: 0 success, 2 runtime/protocol, 3 auth.
int exit_code(Outcome outcome) noexcept;

struct ExitReport {
    Outcome outcome = Outcome::Freed;
    std::string instance_name;
    std::string error;
    std::map<wire::MessageKind, std::uint64_t> served; // requests per kind
    std::uint64_t model_callbacks = 0;
    net::SocketAudit sockets;                         // this serve call's own operations

    std::uint64_t count(wire::MessageKind kind) const
    {
        auto it = served.find(kind);
        return it == served.end() ? 0 : it->second;
    }
    /// One JSON line.
    std::string to_json() const;
    static ExitReport from_json(const std::string& line);
};

/// Dials out to the proxy (the only connection this side ever makes),
/// authenticates, then serves requests against `model` until FREE_INSTANCE or
/// the connection closes. Never throws for network or protocol failures; they
/// end up in the report.
ExitReport connect_and_serve(Model& model, const BackendConfig& config);

/// Serves an already authenticated channel, recording the outcome and
/// per-kind counters in `report`.
void serve(Model& model, net::Channel& channel, std::chrono::milliseconds reply_delay, ExitReport& report);

/// Dispatches one request to the model; the reply carries the model's status.
wire::Message dispatch(Model& model, const wire::Message& request);

} // namespace dcosim::backend
