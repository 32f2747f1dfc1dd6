#include "dcosim/backend.hpp"

#include "dcosim/error.hpp"

#include <json.hpp>

#include <thread>

namespace dcosim::backend {

using wire::MessageKind;

std::string_view to_string(Outcome outcome) noexcept
{
    switch (outcome) {
    case Outcome::Freed: return "freed";
    case Outcome::ClosedByPeer: return "closed_by_peer";
    case Outcome::ConnectFailed: return "connect_failed";
    case Outcome::AuthenticationRejected: return "authentication_rejected";
    case Outcome::ProtocolFailure: return "protocol_failure";
    }
    return "?";
}

int exit_code(Outcome outcome) noexcept
{
    switch (outcome) {
    case Outcome::Freed:
    case Outcome::ClosedByPeer: return 0;
    case Outcome::AuthenticationRejected: return 3;
    default: return 2;
    }
}

std::string ExitReport::to_json() const
{
    nlohmann::json served_json = nlohmann::json::object();
    for (const auto& [kind, n] : served) served_json[std::string(wire::to_string(kind))] = n;
    nlohmann::json doc = {
        {"instance", instance_name},
        {"outcome", to_string(outcome)},
        {"exit_code", exit_code(outcome)},
        {"served", served_json},
        {"model_callbacks", model_callbacks},
        {"sockets",
         {{"binds", sockets.binds},
          {"listens", sockets.listens},
          {"accepts", sockets.accepts},
          {"connect_attempts", sockets.connect_attempts},
          {"connects", sockets.connects}}},
    };
    if (!error.empty()) doc["error"] = error;
    return doc.dump();
}

ExitReport ExitReport::from_json(const std::string& line)
{
    const auto doc = nlohmann::json::parse(line);
    ExitReport r;
    r.instance_name = doc.at("instance").get<std::string>();
    const auto outcome = doc.at("outcome").get<std::string>();
    for (auto o : {Outcome::Freed, Outcome::ClosedByPeer, Outcome::ConnectFailed, Outcome::AuthenticationRejected,
                   Outcome::ProtocolFailure}) {
        if (to_string(o) == outcome) r.outcome = o;
    }
    for (auto kind : wire::kCallKinds) {
        const auto name = std::string(wire::to_string(kind));
        if (doc.at("served").contains(name)) r.served[kind] = doc["served"][name].get<std::uint64_t>();
    }
    r.model_callbacks = doc.at("model_callbacks").get<std::uint64_t>();
    const auto& s = doc.at("sockets");
    r.sockets = {s.at("binds").get<std::uint64_t>(), s.at("listens").get<std::uint64_t>(),
                 s.at("accepts").get<std::uint64_t>(), s.at("connect_attempts").get<std::uint64_t>(),
                 s.at("connects").get<std::uint64_t>()};
    if (doc.contains("error")) r.error = doc["error"].get<std::string>();
    return r;
}

wire::Message dispatch(Model& model, const wire::Message& request)
{
    const auto kind = request.kind();
    switch (kind) {
    case MessageKind::SetupExperiment: {
        const auto& s = std::get<wire::SetupExperiment>(request.body);
        return wire::make_status_reply(kind, model.setup_experiment(s.start_time, s.stop_time, s.tolerance));
    }
    case MessageKind::EnterInit: return wire::make_status_reply(kind, model.enter_initialization_mode());
    case MessageKind::ExitInit: return wire::make_status_reply(kind, model.exit_initialization_mode());
    case MessageKind::DoStep: {
        const auto& d = std::get<wire::DoStep>(request.body);
        return wire::make_status_reply(kind, model.do_step(d.current_time, d.step_size));
    }
    case MessageKind::SetReal:
    case MessageKind::SetInt:
    case MessageKind::SetBool:
    case MessageKind::SetString: {
        const auto& s = std::get<wire::SetValues>(request.body);
        return wire::make_status_reply(kind, model.set(s.vrs, s.values));
    }
    case MessageKind::GetReal:
    case MessageKind::GetInt:
    case MessageKind::GetBool:
    case MessageKind::GetString: {
        const auto& g = std::get<wire::GetValues>(request.body);
        const auto type = wire::data_type(kind);
        auto values = wire::empty_values(type);
        const auto status = model.get(type, g.vrs, values);
        if (wire::type_of(values) != type) values = wire::empty_values(type);
        return wire::make_values_reply(kind, status, std::move(values));
    }
    case MessageKind::Terminate: return wire::make_status_reply(kind, model.terminate());
    case MessageKind::FreeInstance: return wire::make_status_reply(kind, Status::Ok);
    case MessageKind::Handshake: break;
    }
    throw ProtocolError("unexpected " + std::string(wire::to_string(kind)) + " after handshake");
}

void serve(Model& model, net::Channel& channel, std::chrono::milliseconds reply_delay, ExitReport& report)
{
    for (;;) {
        auto request = channel.receive();
        if (!request) {
            report.outcome = Outcome::ClosedByPeer;
            return;
        }
        if (request->is_reply()) throw ProtocolError("received a reply where a request was expected");
        const auto kind = request->kind();
        auto reply = dispatch(model, *request);
        ++report.served[kind];
        if (kind != MessageKind::FreeInstance) ++report.model_callbacks;
        if (reply_delay.count() > 0) std::this_thread::sleep_for(reply_delay);
        channel.send(reply);
        if (kind == MessageKind::FreeInstance) {
            report.outcome = Outcome::Freed;
            return;
        }
    }
}

ExitReport connect_and_serve(Model& model, const BackendConfig& config)
{
    ExitReport report;
    report.instance_name = config.instance_name;
    const auto audit_start = net::thread_audit();
    auto finish = [&](Outcome outcome, std::string error = {}) {
        report.outcome = outcome;
        report.error = std::move(error);
        report.sockets = net::thread_audit() - audit_start;
        return report;
    };

    std::optional<net::TcpStream> stream;
    std::string last_error;
    for (int attempt = 0; attempt < std::max(1, config.connect_attempts); ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config.retry_interval);
        try {
            stream = net::TcpStream::connect(config.proxy_address);
            break;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    if (!stream) return finish(Outcome::ConnectFailed, last_error);

    net::Channel channel(std::move(*stream));
    try {
        if (config.reply_delay.count() > 0) std::this_thread::sleep_for(config.reply_delay);
        const auto reply = channel.request_reply(
            wire::make_request(MessageKind::Handshake,
                               wire::Handshake{wire::kProtocolVersion, config.instance_name, config.auth_token}),
            config.handshake_timeout);
        if (std::get<wire::StatusReply>(reply.body).status != Status::Ok) {
            return finish(Outcome::AuthenticationRejected, "handshake rejected by proxy");
        }
    } catch (const ConnectionError& e) {
        // the proxy drops rejected clients; a close with no reply counts as rejection
        return finish(Outcome::AuthenticationRejected, e.what());
    } catch (const Error& e) {
        return finish(Outcome::ProtocolFailure, e.what());
    }

    try {
        serve(model, channel, config.reply_delay, report);
    } catch (const Error& e) {
        return finish(Outcome::ProtocolFailure, e.what());
    }
    return finish(report.outcome);
}

} // namespace dcosim::backend
