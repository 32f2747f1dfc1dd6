#pragma once

#include "dcosim/descriptor.hpp"

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

// Binary request/reply protocol between a proxy and its model backend.
//
// Frame layout: u32 payload_length (LE) | u8 kind | body. payload_length
// counts the kind byte plus the body. Integers are little-endian and fixed
// width, Real is IEEE-754 binary64, Boolean is one byte (0/1), Integer is a
// signed 32-bit value, Text is u32 byte length + UTF-8, arrays are u32 count
// + elements. A reply's kind is the request kind with bit 0x80 set.

namespace dcosim::wire {

enum class MessageKind : std::uint8_t {
    Handshake = 0x01,
    SetupExperiment = 0x10,
    EnterInit = 0x11,
    ExitInit = 0x12,
    DoStep = 0x13,
    SetReal = 0x14,
    SetInt = 0x15,
    SetBool = 0x16,
    SetString = 0x17,
    GetReal = 0x18,
    GetInt = 0x19,
    GetBool = 0x1A,
    GetString = 0x1B,
    Terminate = 0x1C,
    FreeInstance = 0x1D,
};

inline constexpr std::uint8_t kReplyBit = 0x80;
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxPayload = 16u * 1024u * 1024u;

/// Every request kind except the handshake: the calls a proxy forwards.
inline constexpr MessageKind kCallKinds[] = {
    MessageKind::SetupExperiment, MessageKind::EnterInit, MessageKind::ExitInit,  MessageKind::DoStep,
    MessageKind::SetReal,         MessageKind::SetInt,    MessageKind::SetBool,   MessageKind::SetString,
    MessageKind::GetReal,         MessageKind::GetInt,    MessageKind::GetBool,   MessageKind::GetString,
    MessageKind::Terminate,       MessageKind::FreeInstance,
};

enum class Status : std::uint8_t { Ok = 0, Warning = 1, Discard = 2, Error = 3, Fatal = 4 };

std::string_view to_string(MessageKind kind) noexcept;
std::string_view to_string(Status status) noexcept;
bool is_known_request(std::uint8_t code) noexcept;
bool is_set_kind(MessageKind kind) noexcept;
bool is_get_kind(MessageKind kind) noexcept;
/// Variable type addressed by a SET_x / GET_x kind.
VariableType data_type(MessageKind kind);
MessageKind set_kind(VariableType type) noexcept;
MessageKind get_kind(VariableType type) noexcept;

/// Values of one type; the alternative index equals the VariableType code.
using ValueArray =
    std::variant<std::vector<double>, std::vector<std::int32_t>, std::vector<bool>, std::vector<std::string>>;

ValueArray empty_values(VariableType type);
VariableType type_of(const ValueArray& values) noexcept;
std::size_t size_of(const ValueArray& values) noexcept;
ScalarValue value_at(const ValueArray& values, std::size_t index);
void push_value(ValueArray& values, const ScalarValue& value);

struct Handshake {
    std::uint16_t protocol_version = kProtocolVersion;
    std::string instance_name;
    std::string auth_token;
    bool operator==(const Handshake&) const = default;
};

struct SetupExperiment {
    double start_time = 0.0;
    std::optional<double> stop_time;
    std::optional<double> tolerance;
    bool operator==(const SetupExperiment&) const = default;
};

struct DoStep {
    double current_time = 0.0;
    double step_size = 0.0;
    bool operator==(const DoStep&) const = default;
};

struct SetValues {
    std::vector<std::uint32_t> vrs;
    ValueArray values;
    bool operator==(const SetValues&) const = default;
};

struct GetValues {
    std::vector<std::uint32_t> vrs;
    bool operator==(const GetValues&) const = default;
};

struct StatusReply {
    Status status = Status::Ok;
    bool operator==(const StatusReply&) const = default;
};

struct ValuesReply {
    Status status = Status::Ok;
    ValueArray values;
    bool operator==(const ValuesReply&) const = default;
};

struct Empty {
    bool operator==(const Empty&) const = default;
};

using Body = std::variant<Empty, Handshake, SetupExperiment, DoStep, SetValues, GetValues, StatusReply, ValuesReply>;

/// One protocol message. `code` is the raw kind byte (reply bit included);
/// the body alternative is fixed by the code.
struct Message {
    std::uint8_t code = 0;
    Body body;

    bool is_reply() const noexcept { return (code & kReplyBit) != 0; }
    MessageKind kind() const noexcept { return static_cast<MessageKind>(code & ~kReplyBit); }

    bool operator==(const Message&) const = default;
};

Message make_request(MessageKind kind, Body body = Empty{});
Message make_status_reply(MessageKind request, Status status);
Message make_values_reply(MessageKind request, Status status, ValueArray values);
/// The reply a request of this kind expects when it fails before reaching a model.
Message make_error_reply(MessageKind request, Status status);

/// Serializes one frame. Throws ProtocolError when the body does not match
/// the kind, when SET_x counts differ, or when a string is not valid UTF-8.
std::vector<std::byte> encode_message(const Message& message);
void encode_message(const Message& message, std::vector<std::byte>& out);

struct Incomplete {};

struct Decoded {
    Message message;
    std::size_t consumed = 0; // bytes of the frame, prefix included
};

/// Decodes the frame at the front of `bytes`, or reports that more bytes are
/// needed. Never reads past the declared frame. Throws ProtocolError.
std::variant<Incomplete, Decoded> decode_message(std::span<const std::byte> bytes);

bool is_valid_utf8(std::string_view text) noexcept;

std::string to_hex(std::span<const std::byte> bytes);
std::vector<std::byte> from_hex(std::string_view hex);

/// Incremental decoder over an arbitrarily chunked stream.
class FrameReader {
public:
    void feed(std::span<const std::byte> chunk);
    /// Next complete message, if buffered. Throws ProtocolError.
    std::optional<Message> next();
    std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

private:
    std::vector<std::byte> buffer_;
    std::size_t offset_ = 0;
};

} // namespace dcosim::wire
