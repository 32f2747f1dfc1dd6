#pragma once

// Shared by the unit tests and the acceptance binary. Nothing here calls into
// the codec under test to build expected bytes.

#include "dcosim/backend.hpp"
#include "dcosim/model.hpp"
#include "dcosim/proxy.hpp"
#include "dcosim/wire.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace testsupport {

using namespace dcosim;
using wire::Message;
using wire::MessageKind;
using wire::Status;

/// IEEE-754 binary64 bits from frexp/ldexp arithmetic, no memory reinterpretation.
inline std::uint64_t ieee754_bits(double x)
{
    if (std::isnan(x)) throw std::invalid_argument("nan has no unique encoding");
    const std::uint64_t sign = std::signbit(x) ? 1ull << 63 : 0;
    const double a = std::fabs(x);
    if (a == 0.0) return sign;
    if (std::isinf(a)) return sign | (0x7FFull << 52);
    int e = 0;
    const double m = std::frexp(a, &e); // a = m * 2^e, m in [0.5, 1)
    const int biased = e - 1 + 1023;
    if (biased <= 0) return sign | static_cast<std::uint64_t>(std::ldexp(a, 1074));
    const auto fraction = static_cast<std::uint64_t>(std::ldexp(2.0 * m - 1.0, 52));
    return sign | (static_cast<std::uint64_t>(biased) << 52) | fraction;
}

inline std::vector<std::uint8_t> le_bytes(std::uint64_t v, int width)
{
    std::vector<std::uint8_t> out;
    for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    return out;
}

inline std::vector<std::uint8_t> f64_le(double x) { return le_bytes(ieee754_bits(x), 8); }

inline std::vector<std::uint8_t> parse_hex(const std::string& text)
{
    std::vector<std::uint8_t> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(static_cast<std::uint8_t>(std::stoul(tok, nullptr, 16)));
    return out;
}

inline std::vector<std::uint8_t> to_u8(const std::vector<std::byte>& b)
{
    std::vector<std::uint8_t> out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = static_cast<std::uint8_t>(b[i]);
    return out;
}

inline std::vector<std::byte> to_bytes(const std::vector<std::uint8_t>& b)
{
    std::vector<std::byte> out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = static_cast<std::byte>(b[i]);
    return out;
}

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// name -> frame bytes from data/golden/vectors.txt.
inline std::map<std::string, std::vector<std::uint8_t>> load_golden(const std::string& path)
{
    std::map<std::string, std::vector<std::uint8_t>> out;
    std::istringstream in(read_text(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("bad golden line: " + line);
        out[line.substr(0, tab)] = parse_hex(line.substr(tab + 1));
    }
    return out;
}

/// The message each golden vector encodes.
inline Message golden_message(const std::string& name)
{
    using wire::make_request;
    if (name == "do_step_0_0.01") return make_request(MessageKind::DoStep, wire::DoStep{0.0, 0.01});
    if (name == "handshake_adder_s3cret") return make_request(MessageKind::Handshake, wire::Handshake{1, "adder", "s3cret"});
    if (name == "handshake_reply_ok") return wire::make_status_reply(MessageKind::Handshake, Status::Ok);
    if (name == "handshake_reply_error") return wire::make_status_reply(MessageKind::Handshake, Status::Error);
    if (name == "get_real_reply_ok_3")
        return wire::make_values_reply(MessageKind::GetReal, Status::Ok, std::vector<double>{3.0});
    if (name == "setup_0_stop10")
        return make_request(MessageKind::SetupExperiment, wire::SetupExperiment{0.0, 10.0, std::nullopt});
    if (name == "enter_init") return make_request(MessageKind::EnterInit);
    if (name == "enter_init_reply_ok") return wire::make_status_reply(MessageKind::EnterInit, Status::Ok);
    if (name == "exit_init") return make_request(MessageKind::ExitInit);
    if (name == "set_real_01_1_2")
        return make_request(MessageKind::SetReal, wire::SetValues{{0, 1}, std::vector<double>{1.0, 2.0}});
    if (name == "get_real_2") return make_request(MessageKind::GetReal, wire::GetValues{{2}});
    if (name == "set_int_01_5_7")
        return make_request(MessageKind::SetInt, wire::SetValues{{0, 1}, std::vector<std::int32_t>{5, 7}});
    if (name == "get_int_reply_ok_m2")
        return wire::make_values_reply(MessageKind::GetInt, Status::Ok, std::vector<std::int32_t>{-2});
    if (name == "set_bool_01_t_f")
        return make_request(MessageKind::SetBool, wire::SetValues{{0, 1}, std::vector<bool>{true, false}});
    if (name == "set_string_01_foo_bar")
        return make_request(MessageKind::SetString,
                            wire::SetValues{{0, 1}, std::vector<std::string>{"foo", "bar"}});
    if (name == "get_string_reply_ok_foobar")
        return wire::make_values_reply(MessageKind::GetString, Status::Ok, std::vector<std::string>{"foobar"});
    if (name == "terminate") return make_request(MessageKind::Terminate);
    if (name == "free_instance") return make_request(MessageKind::FreeInstance);
    if (name == "free_instance_reply_ok") return wire::make_status_reply(MessageKind::FreeInstance, Status::Ok);
    throw std::runtime_error("no message for golden vector " + name);
}

// ---- random messages ------------------------------------------------------

class MessageGenerator {
public:
    explicit MessageGenerator(std::uint64_t seed) : rng_(seed) {}

    std::uint64_t bits() { return rng_(); }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

    double real()
    {
        switch (below(4)) {
        case 0: return std::uniform_real_distribution<double>(-1e6, 1e6)(rng_);
        case 1: {
            // any non-NaN bit pattern
            for (;;) {
                double d;
                const auto b = rng_();
                std::memcpy(&d, &b, sizeof d);
                if (!std::isnan(d)) return d;
            }
        }
        case 2: return below(2) ? 0.0 : -0.0;
        default: return static_cast<double>(static_cast<std::int64_t>(below(2001)) - 1000) / 100.0;
        }
    }

    std::string text()
    {
        static const char* pieces[] = {"a", "Z", "0", " ", "\xC3\xA9", "\xE2\x82\xAC", "\xF0\x9F\x98\x80", "\x7F", "-"};
        std::string s;
        const auto n = below(12);
        for (std::size_t i = 0; i < n; ++i) s += pieces[below(std::size(pieces))];
        return s;
    }

    wire::ValueArray values(VariableType type, std::size_t n)
    {
        auto out = wire::empty_values(type);
        for (std::size_t i = 0; i < n; ++i) {
            switch (type) {
            case VariableType::Real: wire::push_value(out, real()); break;
            case VariableType::Integer: wire::push_value(out, static_cast<std::int32_t>(rng_())); break;
            case VariableType::Boolean: wire::push_value(out, below(2) == 1); break;
            case VariableType::Text: wire::push_value(out, text()); break;
            }
        }
        return out;
    }

    std::vector<std::uint32_t> vrs(std::size_t n)
    {
        std::vector<std::uint32_t> v(n);
        for (auto& x : v) x = below(3) == 0 ? static_cast<std::uint32_t>(rng_()) : static_cast<std::uint32_t>(below(16));
        return v;
    }

    Status status() { return static_cast<Status>(below(5)); }

    std::optional<double> maybe_real()
    {
        if (below(2)) return real();
        return std::nullopt;
    }

    /// A well-formed request or reply of `kind`.
    Message message(MessageKind kind, bool reply)
    {
        using wire::make_request;
        const std::size_t n = below(6);
        if (reply) {
            if (wire::is_get_kind(kind)) return wire::make_values_reply(kind, status(), values(wire::data_type(kind), n));
            return wire::make_status_reply(kind, status());
        }
        switch (kind) {
        case MessageKind::Handshake:
            return make_request(kind, wire::Handshake{static_cast<std::uint16_t>(rng_()), text(), text()});
        case MessageKind::SetupExperiment:
            return make_request(kind, wire::SetupExperiment{real(), maybe_real(), maybe_real()});
        case MessageKind::DoStep: return make_request(kind, wire::DoStep{real(), real()});
        case MessageKind::EnterInit:
        case MessageKind::ExitInit:
        case MessageKind::Terminate:
        case MessageKind::FreeInstance: return make_request(kind);
        default: break;
        }
        if (wire::is_set_kind(kind)) return make_request(kind, wire::SetValues{vrs(n), values(wire::data_type(kind), n)});
        return make_request(kind, wire::GetValues{vrs(n)});
    }

    Message any()
    {
        static const MessageKind kinds[] = {
            MessageKind::Handshake, MessageKind::SetupExperiment, MessageKind::EnterInit, MessageKind::ExitInit,
            MessageKind::DoStep,    MessageKind::SetReal,         MessageKind::SetInt,    MessageKind::SetBool,
            MessageKind::SetString, MessageKind::GetReal,         MessageKind::GetInt,    MessageKind::GetBool,
            MessageKind::GetString, MessageKind::Terminate,       MessageKind::FreeInstance};
        return message(kinds[below(std::size(kinds))], below(2) == 1);
    }

private:
    std::mt19937_64 rng_;
};

/// Round-trips `count` generated messages through one stream cut into random
/// chunks. Returns the number of mismatches; `kinds_seen` collects codes.
inline std::size_t roundtrip_property(std::size_t count, std::uint64_t seed, std::map<std::uint8_t, std::size_t>* kinds_seen = nullptr)
{
    MessageGenerator gen(seed);
    std::vector<Message> sent;
    std::vector<std::byte> stream;
    for (std::size_t i = 0; i < count; ++i) {
        sent.push_back(gen.any());
        wire::encode_message(sent.back(), stream);
        if (kinds_seen) ++(*kinds_seen)[sent.back().code];
    }
    wire::FrameReader reader;
    std::vector<Message> received;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        const std::size_t chunk = std::min<std::size_t>(stream.size() - pos, 1 + gen.below(gen.below(4) == 0 ? 200 : 9));
        reader.feed(std::span<const std::byte>(stream.data() + pos, chunk));
        pos += chunk;
        while (auto m = reader.next()) received.push_back(std::move(*m));
    }
    std::size_t mismatches = received.size() == sent.size() ? 0 : 1 + (sent.size() > received.size() ? sent.size() - received.size() : 0);
    for (std::size_t i = 0; i < std::min(sent.size(), received.size()); ++i) {
        // compare re-encoded bytes too, so -0.0 vs 0.0 cannot hide
        if (!(sent[i] == received[i]) || wire::encode_message(sent[i]) != wire::encode_message(received[i])) ++mismatches;
    }
    return mismatches + reader.buffered();
}

// ---- in-process backends --------------------------------------------------

/// A backend served on its own thread.
struct ThreadBackend {
    std::future<backend::ExitReport> report;

    ThreadBackend(std::unique_ptr<Model> model, backend::BackendConfig config)
    {
        report = std::async(std::launch::async, [m = std::move(model), config]() mutable {
            return backend::connect_and_serve(*m, config);
        });
    }
    backend::ExitReport wait() { return report.get(); }
};

inline backend::BackendConfig backend_config(const std::string& address, const std::string& token = "s3cret",
                                             int delay_ms = 0)
{
    backend::BackendConfig c;
    c.proxy_address = address;
    c.instance_name = "test";
    c.auth_token = token;
    c.reply_delay = std::chrono::milliseconds(delay_ms);
    return c;
}

/// Model wrapper that counts callbacks and can fail a chosen call.
class ScriptedModel : public Model {
public:
    explicit ScriptedModel(std::unique_ptr<Model> inner) : inner_(std::move(inner)) {}

    std::optional<MessageKind> fail_on;
    Status fail_status = Status::Fatal;
    std::uint64_t callbacks = 0;

    const ModelDescriptor& descriptor() const override { return inner_->descriptor(); }
    Status setup_experiment(double s, std::optional<double> e, std::optional<double> t) override
    {
        return hit(MessageKind::SetupExperiment, [&] { return inner_->setup_experiment(s, e, t); });
    }
    Status enter_initialization_mode() override
    {
        return hit(MessageKind::EnterInit, [&] { return inner_->enter_initialization_mode(); });
    }
    Status exit_initialization_mode() override
    {
        return hit(MessageKind::ExitInit, [&] { return inner_->exit_initialization_mode(); });
    }
    Status set(std::span<const std::uint32_t> vrs, const ValueArray& values) override
    {
        return hit(wire::set_kind(wire::type_of(values)), [&] { return inner_->set(vrs, values); });
    }
    Status get(VariableType type, std::span<const std::uint32_t> vrs, ValueArray& out) override
    {
        return hit(wire::get_kind(type), [&] { return inner_->get(type, vrs, out); });
    }
    Status do_step(double t, double h) override
    {
        return hit(MessageKind::DoStep, [&] { return inner_->do_step(t, h); });
    }
    Status terminate() override
    {
        return hit(MessageKind::Terminate, [&] { return inner_->terminate(); });
    }

private:
    template <class F>
    Status hit(MessageKind kind, F&& f)
    {
        ++callbacks;
        if (fail_on && *fail_on == kind) return fail_status;
        return f();
    }

    std::unique_ptr<Model> inner_;
};

/// A generic request of `kind` valid for the adder's variable layout.
inline Message adder_request(MessageKind kind)
{
    using wire::make_request;
    switch (kind) {
    case MessageKind::SetupExperiment: return make_request(kind, wire::SetupExperiment{0.0, 1.0, std::nullopt});
    case MessageKind::DoStep: return make_request(kind, wire::DoStep{0.0, 0.01});
    case MessageKind::SetReal: return make_request(kind, wire::SetValues{{0}, std::vector<double>{1.0}});
    case MessageKind::SetInt: return make_request(kind, wire::SetValues{{0}, std::vector<std::int32_t>{1}});
    case MessageKind::SetBool: return make_request(kind, wire::SetValues{{0}, std::vector<bool>{true}});
    case MessageKind::SetString: return make_request(kind, wire::SetValues{{0}, std::vector<std::string>{"x"}});
    case MessageKind::GetReal:
    case MessageKind::GetInt:
    case MessageKind::GetBool:
    case MessageKind::GetString: return make_request(kind, wire::GetValues{{2}});
    default: return make_request(kind);
    }
}

/// Drives a fresh adder proxy (with an in-thread backend) into `target`.
/// Errored is reached through a backend that answers DO_STEP with Fatal.
struct AdderSession {
    std::optional<proxy::ProxyInstance> proxy;
    std::optional<ThreadBackend> backend;

    explicit AdderSession(proxy::InstanceState target)
    {
        using proxy::InstanceState;
        proxy.emplace(proxy::ProxyInstance::listen(adder_descriptor(), "127.0.0.1:0", "s3cret",
                                                   {"adder", net::Seconds(10), net::Seconds(10)}));
        if (target == InstanceState::Listening) return;
        auto model = std::make_unique<ScriptedModel>(make_builtin_model("adder"));
        if (target == InstanceState::Errored) model->fail_on = MessageKind::DoStep;
        backend.emplace(std::move(model), backend_config(proxy->listen_address()));
        proxy->await_backend();
        if (target == InstanceState::Instantiated) return;
        expect_ok(proxy->enter_initialization_mode());
        if (target == InstanceState::InitializationMode) return;
        expect_ok(proxy->exit_initialization_mode());
        if (target == InstanceState::StepMode) return;
        if (target == InstanceState::Terminated) {
            expect_ok(proxy->terminate());
            return;
        }
        proxy->do_step(0.0, 0.01);
    }

    ~AdderSession()
    {
        if (proxy) proxy->free();
        if (backend) backend->report.wait();
    }

    static void expect_ok(const proxy::CallResult& r)
    {
        if (!r.ok()) throw std::runtime_error("setup call failed: " + r.error);
    }
};

} // namespace testsupport
