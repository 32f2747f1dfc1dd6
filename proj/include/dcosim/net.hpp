#pragma once

#include "dcosim/wire.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

namespace dcosim::net {

using Clock = std::chrono::steady_clock;
using Seconds = std::chrono::duration<double>;

/// Counts of socket operations. Every bind/listen/accept/connect in the
/// framework goes through this module, so the counters are a complete audit of
/// the connection directions a process used.
struct SocketAudit {
    std::uint64_t binds = 0;
    std::uint64_t listens = 0;
    std::uint64_t accepts = 0;
    std::uint64_t connect_attempts = 0;
    std::uint64_t connects = 0; // attempts that established a connection

    SocketAudit operator-(const SocketAudit& earlier) const noexcept;
    bool operator==(const SocketAudit&) const = default;
};

/// Process-wide totals.
SocketAudit process_audit() noexcept;
/// Operations performed by the calling thread only.
SocketAudit thread_audit() noexcept;

/// Owns one file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void close() noexcept;

private:
    int fd_ = -1;
};

class TcpStream {
public:
    TcpStream() = default;
    explicit TcpStream(Socket socket) : socket_(std::move(socket)) {}

    /// One outbound connection attempt. Throws ConnectionError if refused.
    static TcpStream connect(const std::string& address, Seconds timeout = Seconds(10));

    bool is_open() const noexcept { return socket_.valid(); }
    void close() noexcept { socket_.close(); }

    void write_all(std::span<const std::byte> bytes);
    /// Reads whatever is available, waiting until `deadline`. Returns 0 on
    /// orderly shutdown by the peer. Throws TimeoutError / ConnectionError.
    std::size_t read_some(std::span<std::byte> buffer, std::optional<Clock::time_point> deadline);

    std::uint64_t bytes_written() const noexcept { return bytes_written_; }

private:
    Socket socket_;
    std::uint64_t bytes_written_ = 0;
};

class TcpListener {
public:
    /// bind + listen. Port 0 picks an ephemeral port. Throws ConnectionError
    /// when the address is already in use.
    static TcpListener bind(const std::string& address);

    /// Waits for one inbound connection until `deadline`; nullopt on timeout.
    std::optional<TcpStream> accept(Clock::time_point deadline);

    std::uint16_t port() const noexcept { return port_; }
    std::string address() const;
    bool is_open() const noexcept { return socket_.valid(); }
    void close() noexcept { socket_.close(); }

private:
    Socket socket_;
    std::string host_;
    std::uint16_t port_ = 0;
};

/// A message channel over one stream, enforcing strict request/reply
/// alternation: no second request is written before the prior reply is read.
class Channel {
public:
    Channel() = default;
    explicit Channel(TcpStream stream) : stream_(std::move(stream)) {}

    bool is_open() const noexcept { return stream_.is_open(); }
    void close() noexcept { stream_.close(); }
    bool awaiting_reply() const noexcept { return pending_.has_value(); }
    std::uint64_t bytes_written() const noexcept { return stream_.bytes_written(); }

    void send(const wire::Message& message);
    /// Next full message. nullopt if the peer closed the stream cleanly
    /// between frames. Throws TimeoutError, ConnectionError, ProtocolError.
    std::optional<wire::Message> receive(std::optional<Clock::time_point> deadline = std::nullopt);

    /// Sends `request` and waits for exactly one reply of kind
    /// `request | 0x80`. Timeout -> TimeoutError; wrong kind or a close
    /// mid-reply -> ProtocolError / ConnectionError. No retry.
    wire::Message request_reply(const wire::Message& request, Seconds timeout);

private:
    TcpStream stream_;
    wire::FrameReader reader_;
    std::optional<wire::MessageKind> pending_;
};

} // namespace dcosim::net
