#pragma once

#include "dcosim/descriptor.hpp"
#include "dcosim/net.hpp"
#include "dcosim/wire.hpp"

#include <memory>
#include <optional>
#include <string>

namespace dcosim::proxy {

enum class InstanceState { Listening, Instantiated, InitializationMode, StepMode, Terminated, Errored };

inline constexpr InstanceState kAllStates[] = {InstanceState::Listening,          InstanceState::Instantiated,
                                               InstanceState::InitializationMode, InstanceState::StepMode,
                                               InstanceState::Terminated,         InstanceState::Errored};

std::string_view to_string(InstanceState state) noexcept;

/// Whether `kind` may be forwarded in `state`, ignoring per-variable checks.
bool is_legal(InstanceState state, wire::MessageKind kind) noexcept;

struct ProxyOptions {
    std::string unit_name;
    net::Seconds accept_timeout{60.0};
    net::Seconds call_timeout{30.0};
};

struct CallResult {
    wire::Status status = wire::Status::Ok;
    bool local = false;                     // rejected before anything was sent
    std::optional<wire::ValueArray> values; // GET_* only
    std::string error;

    bool ok() const noexcept { return status == wire::Status::Ok || status == wire::Status::Warning; }
};

/// Untrusted-side stand-in for one simulation unit. Owns one listening port
/// and, once a backend has dialed in and authenticated, the connection to it.
/// It never opens an outbound connection.
class ProxyInstance {
public:
    /// Binds the listening endpoint; state Listening. Throws ConnectionError
    /// if the address is unavailable.
    static ProxyInstance listen(ModelDescriptor descriptor, const std::string& listen_address,
                                std::string expected_token, ProxyOptions options = {});

    /// listen + await_backend.
    static ProxyInstance instantiate(ModelDescriptor descriptor, const std::string& listen_address,
                                     std::string expected_token, ProxyOptions options = {});

    ProxyInstance(ProxyInstance&&) noexcept;
    ProxyInstance& operator=(ProxyInstance&&) noexcept;
    ~ProxyInstance();

    /// Blocks until a backend completes a handshake with the expected token
    /// and protocol version 1. Rejected clients get an Error reply and are
    /// dropped; listening resumes within the same accept_timeout window.
    /// Throws TimeoutError when the window elapses.
    void await_backend();

    CallResult forward_call(const wire::Message& request);

    CallResult setup_experiment(double start_time, std::optional<double> stop_time = std::nullopt,
                                std::optional<double> tolerance = std::nullopt);
    CallResult enter_initialization_mode();
    CallResult exit_initialization_mode();
    CallResult do_step(double current_time, double step_size);
    CallResult set(std::vector<std::uint32_t> vrs, wire::ValueArray values);
    CallResult get(VariableType type, std::vector<std::uint32_t> vrs);
    CallResult terminate();

    /// Sends FREE_INSTANCE if the connection is live, then closes every
    /// socket. Infallible and idempotent.
    void free() noexcept;

    InstanceState state() const noexcept;
    bool freed() const noexcept;
    bool connected() const noexcept;
    const ModelDescriptor& descriptor() const noexcept;
    const std::string& unit_name() const noexcept;
    /// Actual bound address (resolves port 0).
    std::string listen_address() const;
    /// Name the backend announced in its handshake.
    const std::string& backend_name() const noexcept;
    /// Bytes written on the backend connection so far.
    std::uint64_t bytes_written() const noexcept;

private:
    struct Impl;
    explicit ProxyInstance(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

/// Constant-time comparison over the longer of the two lengths.
bool tokens_equal(std::string_view expected, std::string_view presented) noexcept;

} // namespace dcosim::proxy
