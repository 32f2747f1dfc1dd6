#include "dcosim/net.hpp"

#include "dcosim/error.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

namespace dcosim::net {

namespace {

struct AtomicAudit {
    std::atomic<std::uint64_t> binds{0};
    std::atomic<std::uint64_t> listens{0};
    std::atomic<std::uint64_t> accepts{0};
    std::atomic<std::uint64_t> connect_attempts{0};
    std::atomic<std::uint64_t> connects{0};
};

AtomicAudit g_audit;
thread_local SocketAudit t_audit;

void count(std::atomic<std::uint64_t>& global, std::uint64_t& local)
{
    global.fetch_add(1, std::memory_order_relaxed);
    ++local;
}

std::string errno_text(const char* what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

sockaddr_in resolve(const std::string& address)
{
    auto [host, port] = split_address(address);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host == "localhost") host = "127.0.0.1";
    if (host == "*" || host == "0.0.0.0") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        return addr;
    }
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &result) != 0 || !result) {
        throw ConnectionError("cannot resolve host '" + host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(result->ai_addr)->sin_addr;
    ::freeaddrinfo(result);
    return addr;
}

int remaining_ms(std::optional<Clock::time_point> deadline)
{
    if (!deadline) return -1;
    const auto left = std::chrono::ceil<std::chrono::milliseconds>(*deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

} // namespace

SocketAudit SocketAudit::operator-(const SocketAudit& earlier) const noexcept
{
    return {binds - earlier.binds, listens - earlier.listens, accepts - earlier.accepts,
            connect_attempts - earlier.connect_attempts, connects - earlier.connects};
}

SocketAudit process_audit() noexcept
{
    return {g_audit.binds.load(), g_audit.listens.load(), g_audit.accepts.load(), g_audit.connect_attempts.load(),
            g_audit.connects.load()};
}

SocketAudit thread_audit() noexcept
{
    return t_audit;
}

Socket& Socket::operator=(Socket&& other) noexcept
{
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

void Socket::close() noexcept
{
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

TcpStream TcpStream::connect(const std::string& address, Seconds timeout)
{
    const auto addr = resolve(address);
    Socket sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!sock.valid()) throw ConnectionError(errno_text("socket"));

    count(g_audit.connect_attempts, t_audit.connect_attempts);
    const int flags = ::fcntl(sock.fd(), F_GETFL);
    ::fcntl(sock.fd(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(sock.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno != EINPROGRESS) throw ConnectionError(errno_text(("connect " + address).c_str()));
    if (rc != 0) {
        pollfd pfd{sock.fd(), POLLOUT, 0};
        const int ready = ::poll(&pfd, 1, remaining_ms(Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout)));
        if (ready == 0) throw TimeoutError("connect " + address + " timed out");
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            throw ConnectionError(errno_text(("connect " + address).c_str()));
        }
    }
    ::fcntl(sock.fd(), F_SETFL, flags);
    set_nodelay(sock.fd());
    count(g_audit.connects, t_audit.connects);
    return TcpStream(std::move(sock));
}

void TcpStream::write_all(std::span<const std::byte> bytes)
{
    while (!bytes.empty()) {
        const auto n = ::send(socket_.fd(), bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ConnectionError(errno_text("send"));
        }
        bytes_written_ += static_cast<std::uint64_t>(n);
        bytes = bytes.subspan(static_cast<std::size_t>(n));
    }
}

std::size_t TcpStream::read_some(std::span<std::byte> buffer, std::optional<Clock::time_point> deadline)
{
    for (;;) {
        pollfd pfd{socket_.fd(), POLLIN, 0};
        const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw ConnectionError(errno_text("poll"));
        }
        if (ready == 0) throw TimeoutError("read timed out");
        const auto n = ::recv(socket_.fd(), buffer.data(), buffer.size(), 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ConnectionError(errno_text("recv"));
        }
        return static_cast<std::size_t>(n);
    }
}

TcpListener TcpListener::bind(const std::string& address)
{
    const auto addr = resolve(address);
    TcpListener listener;
    listener.socket_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    const int fd = listener.socket_.fd();
    if (fd < 0) throw ConnectionError(errno_text("socket"));
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    count(g_audit.binds, t_audit.binds);
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw ConnectionError(errno_text(("bind " + address).c_str()));
    }
    count(g_audit.listens, t_audit.listens);
    if (::listen(fd, 8) != 0) throw ConnectionError(errno_text("listen"));

    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    listener.port_ = ntohs(bound.sin_port);
    listener.host_ = split_address(address).first;
    return listener;
}

std::optional<TcpStream> TcpListener::accept(Clock::time_point deadline)
{
    for (;;) {
        pollfd pfd{socket_.fd(), POLLIN, 0};
        const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw ConnectionError(errno_text("poll"));
        }
        if (ready == 0) return std::nullopt;
        const int fd = ::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) continue;
            throw ConnectionError(errno_text("accept"));
        }
        count(g_audit.accepts, t_audit.accepts);
        set_nodelay(fd);
        return TcpStream(Socket(fd));
    }
}

std::string TcpListener::address() const
{
    return host_ + ":" + std::to_string(port_);
}

void Channel::send(const wire::Message& message)
{
    if (!message.is_reply()) {
        if (pending_) {
            throw ProtocolError("request " + std::string(to_string(message.kind())) + " written while " +
                                std::string(to_string(*pending_)) + " awaits its reply");
        }
    }
    const auto bytes = wire::encode_message(message);
    stream_.write_all(bytes);
    if (!message.is_reply()) pending_ = message.kind();
}

std::optional<wire::Message> Channel::receive(std::optional<Clock::time_point> deadline)
{
    std::array<std::byte, 64 * 1024> chunk{};
    for (;;) {
        if (auto message = reader_.next()) {
            if (pending_ && message->code == (static_cast<std::uint8_t>(*pending_) | wire::kReplyBit)) pending_.reset();
            return message;
        }
        const auto n = stream_.read_some(chunk, deadline);
        if (n == 0) {
            if (reader_.buffered() != 0) throw ConnectionError("connection closed mid-frame");
            return std::nullopt;
        }
        reader_.feed(std::span(chunk).first(n));
    }
}

wire::Message Channel::request_reply(const wire::Message& request, Seconds timeout)
{
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout);
    send(request);
    auto reply = receive(deadline);
    if (!reply) throw ConnectionError("connection closed while awaiting reply to " + std::string(to_string(request.kind())));
    const auto expected = static_cast<std::uint8_t>(request.code | wire::kReplyBit);
    if (reply->code != expected) {
        throw ProtocolError("reply kind 0x" + wire::to_hex(std::span(reinterpret_cast<const std::byte*>(&reply->code), 1)) +
                            " does not answer " + std::string(to_string(request.kind())));
    }
    return *reply;
}

} // namespace dcosim::net
