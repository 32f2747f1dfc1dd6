#include "support.hpp"

#include "dcosim/error.hpp"
#include "dcosim/net.hpp"

#include <doctest.h>

using namespace testsupport;

namespace {

std::vector<std::uint8_t> frame_of(const Message& m) { return to_u8(wire::encode_message(m)); }

std::vector<std::uint8_t> concat(std::initializer_list<std::vector<std::uint8_t>> parts)
{
    std::vector<std::uint8_t> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

wire::Message decode_all(const std::vector<std::uint8_t>& bytes)
{
    const auto raw = to_bytes(bytes);
    auto r = wire::decode_message(raw);
    REQUIRE(std::holds_alternative<wire::Decoded>(r));
    CHECK(std::get<wire::Decoded>(r).consumed == raw.size());
    return std::get<wire::Decoded>(r).message;
}

} // namespace

TEST_CASE("independent float encoder agrees with known bit patterns")
{
    CHECK(ieee754_bits(0.01) == 0x3F847AE147AE147Bull);
    CHECK(ieee754_bits(3.0) == 0x4008000000000000ull);
    CHECK(ieee754_bits(1.0) == 0x3FF0000000000000ull);
    CHECK(ieee754_bits(-2.0) == 0xC000000000000000ull);
    CHECK(ieee754_bits(-0.0) == 0x8000000000000000ull);
    CHECK(ieee754_bits(5e-324) == 1ull);
}

TEST_CASE("DO_STEP golden frame")
{
    const auto expected = concat({{0x11, 0, 0, 0, 0x13}, f64_le(0.0), f64_le(0.01)});
    CHECK(expected == parse_hex("11 00 00 00 13 00 00 00 00 00 00 00 00 7B 14 AE 47 E1 7A 84 3F"));
    const auto m = wire::make_request(MessageKind::DoStep, wire::DoStep{0.0, 0.01});
    CHECK(frame_of(m) == expected);
    CHECK(decode_all(expected) == m);
}

TEST_CASE("HANDSHAKE frame length sums its fields")
{
    const auto bytes = frame_of(wire::make_request(MessageKind::Handshake, wire::Handshake{1, "adder", "s3cret"}));
    const std::uint32_t by_hand = 1 + 2 + (4 + 5) + (4 + 6);
    CHECK(by_hand == 22);
    REQUIRE(bytes.size() == 4 + by_hand);
    CHECK(bytes[0] == 22);
    CHECK(bytes[1] == 0);
    CHECK(bytes[4] == 0x01);
    CHECK(bytes[5] == 1);
    CHECK(bytes[6] == 0);
}

TEST_CASE("GET_REAL reply body")
{
    const auto bytes = frame_of(wire::make_values_reply(MessageKind::GetReal, Status::Ok, std::vector<double>{3.0}));
    const std::vector<std::uint8_t> body(bytes.begin() + 5, bytes.end());
    CHECK(body == concat({{0x00, 0x01, 0, 0, 0}, f64_le(3.0)}));
    CHECK(body == parse_hex("00 01 00 00 00 00 00 00 00 00 00 08 40"));
    CHECK(bytes[4] == (0x18 | 0x80));
}

TEST_CASE("golden corpus: encode and decode match every vector")
{
    const auto corpus = load_golden(DCOSIM_DATA_DIR "/golden/vectors.txt");
    CHECK(corpus.size() >= 19);
    for (const auto& [name, bytes] : corpus) {
        CAPTURE(name);
        const auto m = golden_message(name);
        CHECK(frame_of(m) == bytes);
        CHECK(decode_all(bytes) == m);
        // payload_length = 1 + body
        const std::uint32_t len = bytes[0] | bytes[1] << 8 | bytes[2] << 16 | static_cast<std::uint32_t>(bytes[3]) << 24;
        CHECK(len + 4 == bytes.size());
    }
}

TEST_CASE("reply code is the request code with the high bit")
{
    for (auto kind : wire::kCallKinds) {
        const auto r = wire::make_error_reply(kind, Status::Error);
        CHECK(r.code == (static_cast<std::uint8_t>(kind) | 0x80));
        CHECK(r.is_reply());
        CHECK(r.kind() == kind);
    }
}

TEST_CASE("decode: incomplete input")
{
    const auto bytes = to_bytes(parse_hex("11 00 00 00 13 00 00 00 00 00 00 00 00 7B 14 AE 47 E1 7A 84 3F"));
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        CAPTURE(n);
        CHECK(std::holds_alternative<wire::Incomplete>(wire::decode_message(std::span(bytes.data(), n))));
    }
}

TEST_CASE("decode: malformed frames are protocol errors")
{
    auto decode_hex = [](const std::string& hex) { return wire::decode_message(to_bytes(parse_hex(hex))); };
    CHECK_THROWS_AS(decode_hex("01 00 00 00 7F"), ProtocolError);
    CHECK_THROWS_AS(decode_hex("00 00 00 00"), ProtocolError);
    // declared cap + 1, nothing else buffered
    CHECK_THROWS_AS(decode_hex("01 00 00 01"), ProtocolError);
    // text length 5 but only 2 bytes remain in the frame
    CHECK_THROWS_AS(decode_hex("09 00 00 00 01 01 00 05 00 00 00 61 62"), ProtocolError);
    // bool byte 2
    CHECK_THROWS_AS(decode_hex("0E 00 00 00 16 01 00 00 00 00 00 00 00 01 00 00 00 02"), ProtocolError);
    // trailing byte after an empty body
    CHECK_THROWS_AS(decode_hex("02 00 00 00 11 00"), ProtocolError);
    // status 9
    CHECK_THROWS_AS(decode_hex("02 00 00 00 91 09"), ProtocolError);
    // invalid UTF-8
    CHECK_THROWS_AS(decode_hex("0C 00 00 00 01 01 00 01 00 00 00 FF 00 00 00 00"), ProtocolError);
}

TEST_CASE("decode never reads past the declared frame")
{
    auto a = wire::encode_message(wire::make_request(MessageKind::EnterInit));
    const auto b = wire::encode_message(wire::make_request(MessageKind::DoStep, wire::DoStep{1.0, 2.0}));
    a.insert(a.end(), b.begin(), b.end());
    auto r = wire::decode_message(a);
    REQUIRE(std::holds_alternative<wire::Decoded>(r));
    CHECK(std::get<wire::Decoded>(r).consumed == 5);
}

TEST_CASE("encode rejects mismatched counts and bad UTF-8")
{
    CHECK_THROWS_AS(wire::encode_message(wire::make_request(MessageKind::SetReal, wire::SetValues{{0, 1}, std::vector<double>{1.0}})),
                    ProtocolError);
    CHECK_THROWS_AS(wire::encode_message(wire::make_request(
                        MessageKind::SetString, wire::SetValues{{0}, std::vector<std::string>{"\xC3"}})),
                    ProtocolError);
    CHECK_THROWS_AS(wire::encode_message(wire::make_request(MessageKind::Handshake, wire::Handshake{1, "\xFF", "t"})),
                    ProtocolError);
    // body of the wrong type for the kind
    CHECK_THROWS_AS(wire::encode_message(wire::make_request(MessageKind::SetReal, wire::SetValues{{0}, std::vector<std::int32_t>{1}})),
                    ProtocolError);
}

TEST_CASE("encode is deterministic")
{
    MessageGenerator gen(7);
    for (int i = 0; i < 200; ++i) {
        const auto m = gen.any();
        CHECK(wire::encode_message(m) == wire::encode_message(m));
    }
}

TEST_CASE("property: decode(encode(m)) == m under random chunking")
{
    std::map<std::uint8_t, std::size_t> seen;
    CHECK(roundtrip_property(10000, 0xC0FFEE, &seen) == 0);
    // every request kind and every reply kind occurs
    CHECK(seen.size() == 30);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) CHECK(roundtrip_property(500, seed) == 0);
}

TEST_CASE("FrameReader yields k frames for any single-byte feed")
{
    MessageGenerator gen(99);
    std::vector<Message> sent;
    std::vector<std::byte> stream;
    for (int i = 0; i < 50; ++i) {
        sent.push_back(gen.any());
        wire::encode_message(sent.back(), stream);
    }
    wire::FrameReader reader;
    std::vector<Message> got;
    for (auto b : stream) {
        reader.feed(std::span(&b, 1));
        while (auto m = reader.next()) got.push_back(*m);
    }
    CHECK(got == sent);
}

TEST_CASE("hex helpers")
{
    const auto bytes = wire::from_hex("0a FF 10");
    CHECK(wire::to_hex(bytes) == "0A FF 10");
    CHECK(wire::is_valid_utf8("\xF0\x9F\x98\x80"));
    CHECK_FALSE(wire::is_valid_utf8("\xED\xA0\x80")); // surrogate
    CHECK_FALSE(wire::is_valid_utf8("\xC0\xAF"));     // overlong
}

TEST_CASE("channel enforces strict alternation")
{
    auto listener = net::TcpListener::bind("127.0.0.1:0");
    auto client = net::TcpStream::connect(listener.address());
    auto server = listener.accept(net::Clock::now() + std::chrono::seconds(5));
    REQUIRE(server);
    net::Channel c(std::move(client));
    net::Channel s(std::move(*server));

    c.send(wire::make_request(MessageKind::EnterInit));
    CHECK(c.awaiting_reply());
    CHECK_THROWS_AS(c.send(wire::make_request(MessageKind::ExitInit)), ProtocolError);

    auto req = s.receive(net::Clock::now() + std::chrono::seconds(5));
    REQUIRE(req);
    CHECK(req->code == 0x11);
    s.send(wire::make_status_reply(MessageKind::EnterInit, Status::Ok));
    auto reply = c.receive(net::Clock::now() + std::chrono::seconds(5));
    REQUIRE(reply);
    CHECK(reply->code == 0x91);
    CHECK_FALSE(c.awaiting_reply());
}

TEST_CASE("request_reply: wrong reply kind and silence")
{
    auto listener = net::TcpListener::bind("127.0.0.1:0");
    auto client = net::TcpStream::connect(listener.address());
    auto server = listener.accept(net::Clock::now() + std::chrono::seconds(5));
    REQUIRE(server);
    net::Channel c(std::move(client));
    net::Channel s(std::move(*server));

    std::thread peer([&] {
        s.receive(net::Clock::now() + std::chrono::seconds(5));
        s.send(wire::make_status_reply(MessageKind::ExitInit, Status::Ok));
    });
    CHECK_THROWS_AS(c.request_reply(wire::make_request(MessageKind::EnterInit), net::Seconds(5)), ProtocolError);
    peer.join();

    net::Channel c2;
    {
        auto l2 = net::TcpListener::bind("127.0.0.1:0");
        c2 = net::Channel(net::TcpStream::connect(l2.address()));
        auto quiet = l2.accept(net::Clock::now() + std::chrono::seconds(5));
        const auto t0 = net::Clock::now();
        CHECK_THROWS_AS(c2.request_reply(wire::make_request(MessageKind::EnterInit), net::Seconds(0.3)), TimeoutError);
        CHECK(net::Clock::now() - t0 >= std::chrono::milliseconds(300));
    }
}
