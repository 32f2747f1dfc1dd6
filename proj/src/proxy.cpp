#include "dcosim/proxy.hpp"

#include "dcosim/error.hpp"
#include "dcosim/log.hpp"

#include <algorithm>

namespace dcosim::proxy {

using wire::MessageKind;
using wire::Status;

std::string_view to_string(InstanceState state) noexcept
{
    switch (state) {
    case InstanceState::Listening: return "Listening";
    case InstanceState::Instantiated: return "Instantiated";
    case InstanceState::InitializationMode: return "InitializationMode";
    case InstanceState::StepMode: return "StepMode";
    case InstanceState::Terminated: return "Terminated";
    case InstanceState::Errored: return "Errored";
    }
    return "?";
}

bool is_legal(InstanceState state, MessageKind kind) noexcept
{
    using S = InstanceState;
    if (wire::is_set_kind(kind)) return state == S::Instantiated || state == S::InitializationMode || state == S::StepMode;
    if (wire::is_get_kind(kind)) return state == S::InitializationMode || state == S::StepMode;
    switch (kind) {
    case MessageKind::SetupExperiment: return state == S::Instantiated;
    case MessageKind::EnterInit: return state == S::Instantiated;
    case MessageKind::ExitInit: return state == S::InitializationMode;
    case MessageKind::DoStep: return state == S::StepMode;
    case MessageKind::Terminate: return state == S::StepMode;
    case MessageKind::FreeInstance: return state == S::Terminated;
    default: return false;
    }
}

bool tokens_equal(std::string_view expected, std::string_view presented) noexcept
{
    const std::size_t n = std::max(expected.size(), presented.size());
    unsigned diff = expected.size() == presented.size() ? 0u : 1u;
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = i < expected.size() ? static_cast<unsigned char>(expected[i]) : 0u;
        const auto b = i < presented.size() ? static_cast<unsigned char>(presented[i]) : 0u;
        diff |= a ^ b;
    }
    return diff == 0;
}

struct ProxyInstance::Impl {
    ModelDescriptor descriptor;
    std::string expected_token;
    ProxyOptions options;
    net::TcpListener listener;
    net::Channel channel;
    InstanceState state = InstanceState::Listening;
    bool freed = false;
    std::string backend_name;

    void transition(InstanceState next)
    {
        if (next == state) return;
        log::event("state_change", options.unit_name,
                   std::string("from=") + std::string(to_string(state)) + " to=" + std::string(to_string(next)));
        state = next;
    }

    void fail(const std::string& why)
    {
        log::event("error", options.unit_name, "reason=\"" + why + "\"");
        channel.close();
        transition(InstanceState::Errored);
    }

    // Per-variable checks for SET_*/GET_*: references must exist for the
    // type; SET never targets outputs, and only inputs in StepMode.
    std::string check_variables(const wire::Message& request) const
    {
        const auto kind = request.kind();
        const auto type = wire::data_type(kind);
        const auto& vrs = wire::is_set_kind(kind) ? std::get<wire::SetValues>(request.body).vrs
                                                  : std::get<wire::GetValues>(request.body).vrs;
        for (auto vr : vrs) {
            const auto* var = descriptor.find(type, vr);
            if (!var) return "no " + std::string(dcosim::to_string(type)) + " variable with value reference " + std::to_string(vr);
            if (!wire::is_set_kind(kind)) continue;
            if (var->causality == Causality::Output) return "'" + var->name + "' is an output";
            if (state == InstanceState::StepMode && var->causality != Causality::Input) {
                return "'" + var->name + "' is not an input; only inputs may be set in step mode";
            }
        }
        return {};
    }
};

ProxyInstance::ProxyInstance(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ProxyInstance::ProxyInstance(ProxyInstance&&) noexcept = default;
ProxyInstance& ProxyInstance::operator=(ProxyInstance&& other) noexcept
{
    if (this != &other) {
        free();
        impl_ = std::move(other.impl_);
    }
    return *this;
}

ProxyInstance::~ProxyInstance()
{
    free();
}

ProxyInstance ProxyInstance::listen(ModelDescriptor descriptor, const std::string& listen_address,
                                    std::string expected_token, ProxyOptions options)
{
    auto impl = std::make_unique<Impl>();
    impl->descriptor = std::move(descriptor);
    impl->expected_token = std::move(expected_token);
    impl->options = std::move(options);
    if (impl->options.unit_name.empty()) impl->options.unit_name = impl->descriptor.model_name;
    impl->listener = net::TcpListener::bind(listen_address);
    log::event("listen", impl->options.unit_name, "address=" + impl->listener.address());
    return ProxyInstance(std::move(impl));
}

ProxyInstance ProxyInstance::instantiate(ModelDescriptor descriptor, const std::string& listen_address,
                                         std::string expected_token, ProxyOptions options)
{
    auto instance = listen(std::move(descriptor), listen_address, std::move(expected_token), std::move(options));
    instance.await_backend();
    return instance;
}

void ProxyInstance::await_backend()
{
    auto& d = *impl_;
    if (d.state != InstanceState::Listening || d.freed) throw Error("await_backend: instance is not listening");

    const auto deadline = net::Clock::now() + std::chrono::duration_cast<net::Clock::duration>(d.options.accept_timeout);
    while (true) {
        auto stream = d.listener.accept(deadline);
        if (!stream) {
            log::event("error", d.options.unit_name, "reason=\"accept timeout\"");
            throw TimeoutError("unit '" + d.options.unit_name + "': no authenticated backend within " +
                               std::to_string(d.options.accept_timeout.count()) + " s");
        }

        net::Channel channel(std::move(*stream));
        const auto handshake_deadline =
            std::min(deadline, net::Clock::now() + std::chrono::duration_cast<net::Clock::duration>(d.options.call_timeout));
        std::optional<wire::Message> hello;
        try {
            hello = channel.receive(handshake_deadline);
        } catch (const Error& e) {
            log::event("handshake_reject", d.options.unit_name, std::string("reason=\"") + e.what() + "\"");
            continue;
        }
        if (!hello) {
            log::event("handshake_reject", d.options.unit_name, "reason=\"closed before handshake\"");
            continue;
        }

        std::string reason;
        const auto* hs = std::get_if<wire::Handshake>(&hello->body);
        if (hello->is_reply() || hello->kind() != MessageKind::Handshake || !hs) {
            reason = "first message is not a handshake";
        } else if (hs->protocol_version != wire::kProtocolVersion) {
            reason = "unsupported protocol version " + std::to_string(hs->protocol_version);
        } else if (!tokens_equal(d.expected_token, hs->auth_token)) {
            reason = "bad token";
        }

        try {
            if (!reason.empty()) {
                if (hello->kind() == MessageKind::Handshake && !hello->is_reply()) {
                    channel.send(wire::make_status_reply(MessageKind::Handshake, Status::Error));
                }
                log::event("handshake_reject", d.options.unit_name, "reason=\"" + reason + "\"");
                continue;
            }
            channel.send(wire::make_status_reply(MessageKind::Handshake, Status::Ok));
        } catch (const Error& e) {
            log::event("handshake_reject", d.options.unit_name, std::string("reason=\"") + e.what() + "\"");
            continue;
        }

        d.backend_name = hs->instance_name;
        d.channel = std::move(channel);
        log::event("handshake_ok", d.options.unit_name, "backend=" + d.backend_name);
        d.transition(InstanceState::Instantiated);
        return;
    }
}

CallResult ProxyInstance::forward_call(const wire::Message& request)
{
    auto& d = *impl_;
    const auto kind = request.kind();
    auto local_error = [&](std::string why) {
        CallResult r;
        r.status = Status::Error;
        r.local = true;
        r.error = std::move(why);
        return r;
    };

    if (request.is_reply() || kind == MessageKind::Handshake) return local_error("not a forwardable call");
    if (d.freed) return local_error("instance freed");
    if (!is_legal(d.state, kind)) {
        return local_error(std::string(wire::to_string(kind)) + " is illegal in state " + std::string(to_string(d.state)));
    }
    if (wire::is_set_kind(kind) || wire::is_get_kind(kind)) {
        if (auto why = d.check_variables(request); !why.empty()) return local_error(std::move(why));
    }

    CallResult result;
    wire::Message reply;
    try {
        reply = d.channel.request_reply(request, d.options.call_timeout);
    } catch (const TimeoutError& e) {
        d.fail(std::string(wire::to_string(kind)) + ": " + e.what());
        result.status = Status::Error;
        result.error = e.what();
        return result;
    } catch (const Error& e) {
        d.fail(std::string(wire::to_string(kind)) + ": " + e.what());
        result.status = Status::Fatal;
        result.error = e.what();
        return result;
    }

    if (const auto* values = std::get_if<wire::ValuesReply>(&reply.body)) {
        result.status = values->status;
        result.values = values->values;
    } else {
        result.status = std::get<wire::StatusReply>(reply.body).status;
    }

    if (result.status == Status::Fatal) {
        d.fail("backend reported Fatal for " + std::string(wire::to_string(kind)));
        return result;
    }
    if (result.ok()) {
        switch (kind) {
        case MessageKind::EnterInit: d.transition(InstanceState::InitializationMode); break;
        case MessageKind::ExitInit: d.transition(InstanceState::StepMode); break;
        case MessageKind::Terminate: d.transition(InstanceState::Terminated); break;
        default: break;
        }
    }
    if (kind == MessageKind::FreeInstance) {
        d.channel.close();
        d.listener.close();
        d.freed = true;
    }
    return result;
}

CallResult ProxyInstance::setup_experiment(double start_time, std::optional<double> stop_time,
                                           std::optional<double> tolerance)
{
    return forward_call(wire::make_request(MessageKind::SetupExperiment, wire::SetupExperiment{start_time, stop_time, tolerance}));
}

CallResult ProxyInstance::enter_initialization_mode()
{
    return forward_call(wire::make_request(MessageKind::EnterInit));
}

CallResult ProxyInstance::exit_initialization_mode()
{
    return forward_call(wire::make_request(MessageKind::ExitInit));
}

CallResult ProxyInstance::do_step(double current_time, double step_size)
{
    return forward_call(wire::make_request(MessageKind::DoStep, wire::DoStep{current_time, step_size}));
}

CallResult ProxyInstance::set(std::vector<std::uint32_t> vrs, wire::ValueArray values)
{
    const auto kind = wire::set_kind(wire::type_of(values));
    return forward_call(wire::make_request(kind, wire::SetValues{std::move(vrs), std::move(values)}));
}

CallResult ProxyInstance::get(VariableType type, std::vector<std::uint32_t> vrs)
{
    return forward_call(wire::make_request(wire::get_kind(type), wire::GetValues{std::move(vrs)}));
}

CallResult ProxyInstance::terminate()
{
    return forward_call(wire::make_request(MessageKind::Terminate));
}

void ProxyInstance::free() noexcept
{
    if (!impl_ || impl_->freed) return;
    auto& d = *impl_;
    d.freed = true;
    if (d.channel.is_open() && d.state != InstanceState::Errored) {
        try {
            // Best effort: a short wait for the acknowledgement, failures ignored.
            d.channel.request_reply(wire::make_request(MessageKind::FreeInstance),
                                    std::min(d.options.call_timeout, net::Seconds(5.0)));
        } catch (...) {
        }
    }
    d.channel.close();
    d.listener.close();
    log::event("freed", d.options.unit_name);
}

InstanceState ProxyInstance::state() const noexcept { return impl_->state; }
bool ProxyInstance::freed() const noexcept { return impl_->freed; }
bool ProxyInstance::connected() const noexcept { return impl_->channel.is_open(); }
const ModelDescriptor& ProxyInstance::descriptor() const noexcept { return impl_->descriptor; }
const std::string& ProxyInstance::unit_name() const noexcept { return impl_->options.unit_name; }
std::string ProxyInstance::listen_address() const { return impl_->listener.address(); }
const std::string& ProxyInstance::backend_name() const noexcept { return impl_->backend_name; }
std::uint64_t ProxyInstance::bytes_written() const noexcept { return impl_->channel.bytes_written(); }

} // namespace dcosim::proxy
