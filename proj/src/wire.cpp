#include "dcosim/wire.hpp"

#include "dcosim/error.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace dcosim::wire {

static_assert(std::numeric_limits<double>::is_iec559, "wire format requires IEEE-754 doubles");

std::string_view to_string(MessageKind kind) noexcept
{
    switch (kind) {
    case MessageKind::Handshake: return "HANDSHAKE";
    case MessageKind::SetupExperiment: return "SETUP_EXPERIMENT";
    case MessageKind::EnterInit: return "ENTER_INIT";
    case MessageKind::ExitInit: return "EXIT_INIT";
    case MessageKind::DoStep: return "DO_STEP";
    case MessageKind::SetReal: return "SET_REAL";
    case MessageKind::SetInt: return "SET_INT";
    case MessageKind::SetBool: return "SET_BOOL";
    case MessageKind::SetString: return "SET_STRING";
    case MessageKind::GetReal: return "GET_REAL";
    case MessageKind::GetInt: return "GET_INT";
    case MessageKind::GetBool: return "GET_BOOL";
    case MessageKind::GetString: return "GET_STRING";
    case MessageKind::Terminate: return "TERMINATE";
    case MessageKind::FreeInstance: return "FREE_INSTANCE";
    }
    return "UNKNOWN";
}

std::string_view to_string(Status status) noexcept
{
    switch (status) {
    case Status::Ok: return "OK";
    case Status::Warning: return "Warning";
    case Status::Discard: return "Discard";
    case Status::Error: return "Error";
    case Status::Fatal: return "Fatal";
    }
    return "?";
}

bool is_known_request(std::uint8_t code) noexcept
{
    return code == 0x01 || (code >= 0x10 && code <= 0x1D);
}

bool is_set_kind(MessageKind kind) noexcept
{
    return kind >= MessageKind::SetReal && kind <= MessageKind::SetString;
}

bool is_get_kind(MessageKind kind) noexcept
{
    return kind >= MessageKind::GetReal && kind <= MessageKind::GetString;
}

VariableType data_type(MessageKind kind)
{
    if (is_set_kind(kind)) {
        return static_cast<VariableType>(static_cast<std::uint8_t>(kind) - static_cast<std::uint8_t>(MessageKind::SetReal));
    }
    if (is_get_kind(kind)) {
        return static_cast<VariableType>(static_cast<std::uint8_t>(kind) - static_cast<std::uint8_t>(MessageKind::GetReal));
    }
    throw ProtocolError(std::string(to_string(kind)) + " carries no values");
}

MessageKind set_kind(VariableType type) noexcept
{
    return static_cast<MessageKind>(static_cast<std::uint8_t>(MessageKind::SetReal) + static_cast<std::uint8_t>(type));
}

MessageKind get_kind(VariableType type) noexcept
{
    return static_cast<MessageKind>(static_cast<std::uint8_t>(MessageKind::GetReal) + static_cast<std::uint8_t>(type));
}

ValueArray empty_values(VariableType type)
{
    switch (type) {
    case VariableType::Real: return std::vector<double>{};
    case VariableType::Integer: return std::vector<std::int32_t>{};
    case VariableType::Boolean: return std::vector<bool>{};
    case VariableType::Text: return std::vector<std::string>{};
    }
    return std::vector<double>{};
}

VariableType type_of(const ValueArray& values) noexcept
{
    return static_cast<VariableType>(values.index());
}

std::size_t size_of(const ValueArray& values) noexcept
{
    return std::visit([](const auto& v) { return v.size(); }, values);
}

ScalarValue value_at(const ValueArray& values, std::size_t index)
{
    return std::visit(
        [index](const auto& v) -> ScalarValue {
            using T = typename std::decay_t<decltype(v)>::value_type;
            return ScalarValue(std::in_place_type<T>, v.at(index));
        },
        values);
}

void push_value(ValueArray& values, const ScalarValue& value)
{
    std::visit(
        [&value](auto& v) {
            using T = typename std::decay_t<decltype(v)>::value_type;
            const auto* typed = std::get_if<T>(&value);
            if (!typed) throw ProtocolError("value type does not match array type");
            v.push_back(*typed);
        },
        values);
}

Message make_request(MessageKind kind, Body body)
{
    return Message{static_cast<std::uint8_t>(kind), std::move(body)};
}

Message make_status_reply(MessageKind request, Status status)
{
    return Message{static_cast<std::uint8_t>(static_cast<std::uint8_t>(request) | kReplyBit), StatusReply{status}};
}

Message make_values_reply(MessageKind request, Status status, ValueArray values)
{
    return Message{static_cast<std::uint8_t>(static_cast<std::uint8_t>(request) | kReplyBit),
                   ValuesReply{status, std::move(values)}};
}

Message make_error_reply(MessageKind request, Status status)
{
    if (is_get_kind(request)) return make_values_reply(request, status, empty_values(data_type(request)));
    return make_status_reply(request, status);
}

bool is_valid_utf8(std::string_view text) noexcept
{
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    const auto* end = p + text.size();
    while (p < end) {
        const unsigned char c = *p;
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++p;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (static_cast<std::size_t>(end - p) <= extra) return false;
        for (std::size_t i = 1; i <= extra; ++i) {
            if ((p[i] & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (p[i] & 0x3F);
        }
        // overlong forms, surrogates, out of range
        if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000)) return false;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        p += extra + 1;
    }
    return true;
}

namespace {

class Writer {
public:
    explicit Writer(std::vector<std::byte>& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
    void u16(std::uint16_t v) { little_endian(v); }
    void u32(std::uint32_t v) { little_endian(v); }
    void i32(std::int32_t v) { little_endian(static_cast<std::uint32_t>(v)); }
    void f64(double v) { little_endian(std::bit_cast<std::uint64_t>(v)); }
    void boolean(bool v) { u8(v ? 1 : 0); }

    void text(const std::string& s)
    {
        if (!is_valid_utf8(s)) throw ProtocolError("string is not valid UTF-8");
        if (s.size() > kMaxPayload) throw ProtocolError("string exceeds frame cap");
        u32(static_cast<std::uint32_t>(s.size()));
        const auto* bytes = reinterpret_cast<const std::byte*>(s.data());
        out_.insert(out_.end(), bytes, bytes + s.size());
    }

    template <typename T, typename Fn>
    void array(const std::vector<T>& items, Fn&& element)
    {
        u32(static_cast<std::uint32_t>(items.size()));
        for (const auto& item : items) element(item);
    }

    void values(const ValueArray& values)
    {
        std::visit(
            [this](const auto& v) {
                using T = typename std::decay_t<decltype(v)>::value_type;
                array(v, [this](const auto& x) {
                    if constexpr (std::is_same_v<T, double>) f64(x);
                    else if constexpr (std::is_same_v<T, std::int32_t>) i32(x);
                    else if constexpr (std::is_same_v<T, bool>) boolean(x);
                    else text(x);
                });
            },
            values);
    }

private:
    template <typename U>
    void little_endian(U v)
    {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
    }

    std::vector<std::byte>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() { return little_endian<std::uint16_t>(); }
    std::uint32_t u32() { return little_endian<std::uint32_t>(); }
    std::int32_t i32() { return static_cast<std::int32_t>(little_endian<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(little_endian<std::uint64_t>()); }

    bool flag()
    {
        const auto b = u8();
        if (b > 1) throw ProtocolError("boolean byte " + std::to_string(b) + " is not 0 or 1");
        return b == 1;
    }

    std::string text()
    {
        const auto len = u32();
        if (len > remaining()) throw ProtocolError("declared string length exceeds remaining frame bytes");
        auto bytes = take(len);
        std::string s(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        if (!is_valid_utf8(s)) throw ProtocolError("string is not valid UTF-8");
        return s;
    }

    template <typename T, typename Fn>
    std::vector<T> array(std::size_t min_element_size, Fn&& element)
    {
        const auto count = u32();
        if (static_cast<std::uint64_t>(count) * min_element_size > remaining()) {
            throw ProtocolError("declared array count exceeds remaining frame bytes");
        }
        std::vector<T> items;
        items.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) items.push_back(element());
        return items;
    }

    ValueArray values(VariableType type)
    {
        switch (type) {
        case VariableType::Real: return array<double>(8, [this] { return f64(); });
        case VariableType::Integer: return array<std::int32_t>(4, [this] { return i32(); });
        case VariableType::Boolean: return array<bool>(1, [this] { return flag(); });
        case VariableType::Text: return array<std::string>(4, [this] { return text(); });
        }
        throw ProtocolError("unknown variable type");
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const std::byte> take(std::size_t n)
    {
        if (n > remaining()) throw ProtocolError("field runs past the end of the frame");
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    template <typename U>
    U little_endian()
    {
        auto b = take(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
        return v;
    }

    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
const T& body_as(const Message& m)
{
    const auto* body = std::get_if<T>(&m.body);
    if (!body) throw ProtocolError("body does not match kind " + std::string(to_string(m.kind())));
    return *body;
}

void encode_body(const Message& m, Writer& w)
{
    const auto kind = m.kind();
    if (m.is_reply()) {
        if (is_get_kind(kind)) {
            const auto& reply = body_as<ValuesReply>(m);
            if (type_of(reply.values) != data_type(kind)) throw ProtocolError("reply values do not match kind");
            w.u8(static_cast<std::uint8_t>(reply.status));
            w.values(reply.values);
        } else {
            w.u8(static_cast<std::uint8_t>(body_as<StatusReply>(m).status));
        }
        return;
    }

    switch (kind) {
    case MessageKind::Handshake: {
        const auto& h = body_as<Handshake>(m);
        w.u16(h.protocol_version);
        w.text(h.instance_name);
        w.text(h.auth_token);
        break;
    }
    case MessageKind::SetupExperiment: {
        const auto& s = body_as<SetupExperiment>(m);
        w.f64(s.start_time);
        w.boolean(s.stop_time.has_value());
        w.f64(s.stop_time.value_or(0.0));
        w.boolean(s.tolerance.has_value());
        w.f64(s.tolerance.value_or(0.0));
        break;
    }
    case MessageKind::DoStep: {
        const auto& d = body_as<DoStep>(m);
        w.f64(d.current_time);
        w.f64(d.step_size);
        break;
    }
    case MessageKind::SetReal:
    case MessageKind::SetInt:
    case MessageKind::SetBool:
    case MessageKind::SetString: {
        const auto& s = body_as<SetValues>(m);
        if (type_of(s.values) != data_type(kind)) throw ProtocolError("values do not match kind");
        if (s.vrs.size() != size_of(s.values)) {
            throw ProtocolError("mismatched lengths: " + std::to_string(s.vrs.size()) + " value references, " +
                                std::to_string(size_of(s.values)) + " values");
        }
        w.array(s.vrs, [&w](std::uint32_t vr) { w.u32(vr); });
        w.values(s.values);
        break;
    }
    case MessageKind::GetReal:
    case MessageKind::GetInt:
    case MessageKind::GetBool:
    case MessageKind::GetString:
        w.array(body_as<GetValues>(m).vrs, [&w](std::uint32_t vr) { w.u32(vr); });
        break;
    case MessageKind::EnterInit:
    case MessageKind::ExitInit:
    case MessageKind::Terminate:
    case MessageKind::FreeInstance:
        body_as<Empty>(m);
        break;
    }
}

Body decode_body(std::uint8_t code, Reader& r)
{
    const auto kind = static_cast<MessageKind>(code & ~kReplyBit);
    if ((code & kReplyBit) != 0) {
        auto status = r.u8();
        if (status > static_cast<std::uint8_t>(Status::Fatal)) {
            throw ProtocolError("unknown status code " + std::to_string(status));
        }
        if (is_get_kind(kind)) return ValuesReply{static_cast<Status>(status), r.values(data_type(kind))};
        return StatusReply{static_cast<Status>(status)};
    }

    switch (kind) {
    case MessageKind::Handshake: {
        Handshake h;
        h.protocol_version = r.u16();
        h.instance_name = r.text();
        h.auth_token = r.text();
        return h;
    }
    case MessageKind::SetupExperiment: {
        SetupExperiment s;
        s.start_time = r.f64();
        const bool stop_defined = r.flag();
        const double stop = r.f64();
        const bool tol_defined = r.flag();
        const double tol = r.f64();
        if (stop_defined) s.stop_time = stop;
        if (tol_defined) s.tolerance = tol;
        return s;
    }
    case MessageKind::DoStep: {
        DoStep d;
        d.current_time = r.f64();
        d.step_size = r.f64();
        return d;
    }
    case MessageKind::SetReal:
    case MessageKind::SetInt:
    case MessageKind::SetBool:
    case MessageKind::SetString: {
        SetValues s;
        s.vrs = r.array<std::uint32_t>(4, [&r] { return r.u32(); });
        s.values = r.values(data_type(kind));
        if (s.vrs.size() != size_of(s.values)) throw ProtocolError("SET value count differs from reference count");
        return s;
    }
    case MessageKind::GetReal:
    case MessageKind::GetInt:
    case MessageKind::GetBool:
    case MessageKind::GetString:
        return GetValues{r.array<std::uint32_t>(4, [&r] { return r.u32(); })};
    case MessageKind::EnterInit:
    case MessageKind::ExitInit:
    case MessageKind::Terminate:
    case MessageKind::FreeInstance:
        return Empty{};
    }
    throw ProtocolError("unknown kind");
}

} // namespace

void encode_message(const Message& message, std::vector<std::byte>& out)
{
    if (!is_known_request(message.code & ~kReplyBit)) {
        throw ProtocolError("unknown message kind code " + std::to_string(message.code));
    }
    const auto frame_start = out.size();
    Writer w(out);
    w.u32(0);
    w.u8(message.code);
    encode_body(message, w);

    const auto payload = out.size() - frame_start - 4;
    if (payload > kMaxPayload) {
        out.resize(frame_start);
        throw ProtocolError("frame exceeds the 16 MiB cap");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        out[frame_start + i] = static_cast<std::byte>((payload >> (8 * i)) & 0xFF);
    }
}

std::vector<std::byte> encode_message(const Message& message)
{
    std::vector<std::byte> out;
    encode_message(message, out);
    return out;
}

std::variant<Incomplete, Decoded> decode_message(std::span<const std::byte> bytes)
{
    if (bytes.size() < 4) return Incomplete{};
    std::uint32_t length = 0;
    for (std::size_t i = 0; i < 4; ++i) length |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    if (length == 0) throw ProtocolError("empty frame: payload must contain a kind byte");
    if (length > kMaxPayload) throw ProtocolError("frame of " + std::to_string(length) + " bytes exceeds the 16 MiB cap");
    if (bytes.size() - 4 < length) return Incomplete{};

    const auto code = static_cast<std::uint8_t>(bytes[4]);
    if (!is_known_request(code & ~kReplyBit)) {
        throw ProtocolError("unknown message kind code 0x" + to_hex(bytes.subspan(4, 1)));
    }
    Reader r(bytes.subspan(5, length - 1));
    Decoded out;
    out.message.code = code;
    out.message.body = decode_body(code, r);
    if (r.remaining() != 0) throw ProtocolError("trailing bytes inside frame");
    out.consumed = 4 + static_cast<std::size_t>(length);
    return out;
}

std::string to_hex(std::span<const std::byte> bytes)
{
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(bytes.size() * 3);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (i) out.push_back(' ');
        const auto b = static_cast<unsigned>(bytes[i]);
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

std::vector<std::byte> from_hex(std::string_view hex)
{
    std::vector<std::byte> out;
    int high = -1;
    for (char c : hex) {
        int v = -1;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
        else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
        else throw std::invalid_argument("invalid hex digit");
        if (high < 0) {
            high = v;
        } else {
            out.push_back(static_cast<std::byte>((high << 4) | v));
            high = -1;
        }
    }
    if (high >= 0) throw std::invalid_argument("odd number of hex digits");
    return out;
}

void FrameReader::feed(std::span<const std::byte> chunk)
{
    if (offset_ > 0 && offset_ == buffer_.size()) {
        buffer_.clear();
        offset_ = 0;
    }
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
}

std::optional<Message> FrameReader::next()
{
    auto result = decode_message(std::span(buffer_).subspan(offset_));
    auto* decoded = std::get_if<Decoded>(&result);
    if (!decoded) return std::nullopt;
    offset_ += decoded->consumed;
    if (offset_ > 64 * 1024 && offset_ * 2 > buffer_.size()) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
        offset_ = 0;
    }
    return std::move(decoded->message);
}

} // namespace dcosim::wire
