#include "support.hpp"

#include "dcosim/error.hpp"
#include "dcosim/log.hpp"

#include <doctest.h>

#include <mutex>

using namespace testsupport;
using proxy::InstanceState;
using proxy::ProxyInstance;

namespace {

struct LogCapture {
    std::mutex mu;
    std::vector<std::string> lines;
    log::Sink previous;

    LogCapture()
    {
        previous = log::set_sink([this](std::string_view l) {
            std::lock_guard lock(mu);
            lines.emplace_back(l);
        });
    }
    ~LogCapture() { log::set_sink(previous); }

    std::size_t count(const std::string& needle)
    {
        std::lock_guard lock(mu);
        std::size_t n = 0;
        for (const auto& l : lines) n += l.find(needle) != std::string::npos;
        return n;
    }
};

ProxyInstance listen_adder(double accept_s = 10, double call_s = 10)
{
    return ProxyInstance::listen(adder_descriptor(), "127.0.0.1:0", "s3cret",
                                 {"adder", net::Seconds(accept_s), net::Seconds(call_s)});
}

} // namespace

TEST_CASE("handshake with the right token")
{
    LogCapture logs;
    auto p = listen_adder();
    CHECK(p.state() == InstanceState::Listening);
    auto cfg = backend_config(p.listen_address());
    cfg.instance_name = "adder-backend";
    ThreadBackend b(make_builtin_model("adder"), cfg);
    p.await_backend();
    CHECK(p.state() == InstanceState::Instantiated);
    CHECK(p.backend_name() == "adder-backend");
    CHECK(p.connected());
    p.free();
    CHECK(b.wait().outcome == backend::Outcome::Freed);
    CHECK(logs.count("EVENT=listen unit=adder") == 1);
    CHECK(logs.count("EVENT=handshake_ok unit=adder") == 1);
}

TEST_CASE("wrong token is rejected, listening continues, honest client succeeds")
{
    LogCapture logs;
    auto p = listen_adder();
    const auto addr = p.listen_address();
    auto waiting = std::async(std::launch::async, [&] { p.await_backend(); });

    auto bad_model = std::make_unique<ScriptedModel>(make_builtin_model("adder"));
    auto* bad = bad_model.get();
    ThreadBackend intruder(std::move(bad_model), backend_config(addr, "wrong"));
    const auto rejected = intruder.wait();
    CHECK(rejected.outcome == backend::Outcome::AuthenticationRejected);
    CHECK(backend::exit_code(rejected.outcome) == 3);
    CHECK(rejected.model_callbacks == 0);
    CHECK(bad->callbacks == 0);
    CHECK(p.state() == InstanceState::Listening);

    ThreadBackend honest(make_builtin_model("adder"), backend_config(addr));
    waiting.get();
    CHECK(p.state() == InstanceState::Instantiated);
    CHECK(logs.count("EVENT=handshake_reject") == 1);
    p.free();
    CHECK(honest.wait().outcome == backend::Outcome::Freed);
}

TEST_CASE("accept timeout of 2 s")
{
    auto p = listen_adder(2.0);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(p.await_backend(), TimeoutError);
    const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(waited >= 2.0);
    CHECK(waited < 3.0);
}

TEST_CASE("address already bound")
{
    auto p = listen_adder();
    CHECK_THROWS_AS(ProxyInstance::listen(adder_descriptor(), p.listen_address(), "s3cret"), ConnectionError);
}

TEST_CASE("exhaustive: illegal (state, call) pairs are local errors with nothing written")
{
    // the legal table, written out independently of is_legal
    auto legal = [](InstanceState s, MessageKind k) {
        const bool set = wire::is_set_kind(k), get = wire::is_get_kind(k);
        switch (s) {
        case InstanceState::Instantiated: return set || k == MessageKind::SetupExperiment || k == MessageKind::EnterInit;
        case InstanceState::InitializationMode: return set || get || k == MessageKind::ExitInit;
        case InstanceState::StepMode: return set || get || k == MessageKind::DoStep || k == MessageKind::Terminate;
        case InstanceState::Terminated: return k == MessageKind::FreeInstance;
        default: return false;
        }
    };

    std::size_t pairs = 0, illegal = 0;
    for (auto state : proxy::kAllStates) {
        AdderSession session(state);
        auto& p = *session.proxy;
        REQUIRE(p.state() == state);
        for (auto kind : wire::kCallKinds) {
            ++pairs;
            CAPTURE(proxy::to_string(state));
            CAPTURE(wire::to_string(kind));
            CHECK(proxy::is_legal(state, kind) == legal(state, kind));
            if (legal(state, kind)) continue;
            ++illegal;
            const auto before = p.bytes_written();
            const auto r = p.forward_call(adder_request(kind));
            CHECK(r.local);
            CHECK(r.status == Status::Error);
            CHECK(p.bytes_written() == before);
            CHECK(p.state() == state);
        }
    }
    CHECK(pairs == 6 * 14);
    // legal: Instantiated 6, InitializationMode 9, StepMode 10, Terminated 1
    CHECK(illegal == 84 - 26);
}

TEST_CASE("data calls in StepMode")
{
    AdderSession s(InstanceState::StepMode);
    auto& p = *s.proxy;
    auto r = p.set({0, 1}, std::vector<double>{1.0, 2.0});
    CHECK(r.status == Status::Ok);
    CHECK_FALSE(r.local);
    CHECK(p.state() == InstanceState::StepMode);
    CHECK(p.do_step(0.0, 0.01).ok());
    auto g = p.get(VariableType::Real, {2});
    REQUIRE(g.values);
    CHECK(std::get<std::vector<double>>(*g.values) == std::vector<double>{3.0});

    // outputs are never settable, parameters not in StepMode, unknown vrs rejected
    const auto before = p.bytes_written();
    CHECK(p.set({2}, std::vector<double>{1.0}).local);
    CHECK(p.set({9}, std::vector<double>{1.0}).local);
    CHECK(p.get(VariableType::Real, {9}).local);
    CHECK(p.bytes_written() == before);
}

TEST_CASE("TERMINATE then GET_REAL is a local error")
{
    AdderSession s(InstanceState::StepMode);
    auto& p = *s.proxy;
    CHECK(p.terminate().ok());
    CHECK(p.state() == InstanceState::Terminated);
    const auto before = p.bytes_written();
    auto r = p.get(VariableType::Real, {2});
    CHECK(r.local);
    CHECK(r.status == Status::Error);
    CHECK(p.bytes_written() == before);
}

TEST_CASE("free after Terminated sends FREE_INSTANCE; double free is a no-op")
{
    auto p = listen_adder();
    ThreadBackend b(make_builtin_model("adder"), backend_config(p.listen_address()));
    p.await_backend();
    REQUIRE(p.enter_initialization_mode().ok());
    REQUIRE(p.exit_initialization_mode().ok());
    REQUIRE(p.terminate().ok());
    const auto before = p.bytes_written();
    p.free();
    CHECK(p.freed());
    CHECK_FALSE(p.connected());
    CHECK(p.bytes_written() == before + 5);
    p.free();
    CHECK(p.bytes_written() == before + 5);
    const auto report = b.wait();
    CHECK(report.outcome == backend::Outcome::Freed);
    CHECK(report.count(MessageKind::FreeInstance) == 1);

    const auto r = p.forward_call(wire::make_request(MessageKind::FreeInstance));
    CHECK(r.local);
}

TEST_CASE("Errored: backend Fatal, then free writes nothing")
{
    AdderSession s(InstanceState::Errored);
    auto& p = *s.proxy;
    CHECK(p.state() == InstanceState::Errored);
    const auto before = p.bytes_written();
    p.free();
    CHECK(p.bytes_written() == before);
    CHECK_FALSE(p.connected());
}

TEST_CASE("call timeout moves the instance to Errored")
{
    // a slow backend: every reply arrives after the 0.3 s call timeout
    auto q = listen_adder(10, 0.3);
    auto cfg = backend_config(q.listen_address());
    std::atomic<bool> slow{false};
    struct Slow : ScriptedModel {
        std::atomic<bool>* flag;
        Slow(std::atomic<bool>* f) : ScriptedModel(make_builtin_model("adder")), flag(f) {}
        Status do_step(double t, double h) override
        {
            if (*flag) std::this_thread::sleep_for(std::chrono::milliseconds(800));
            return ScriptedModel::do_step(t, h);
        }
    };
    ThreadBackend sb(std::make_unique<Slow>(&slow), cfg);
    q.await_backend();
    REQUIRE(q.enter_initialization_mode().ok());
    REQUIRE(q.exit_initialization_mode().ok());
    slow = true;
    const auto r = q.do_step(0.0, 0.01);
    CHECK(r.status == Status::Error);
    CHECK_FALSE(r.local);
    CHECK(q.state() == InstanceState::Errored);
    q.free();
    sb.wait();
}

TEST_CASE("the proxy side never connects out")
{
    const auto before = net::thread_audit();
    {
        auto p = listen_adder();
        ThreadBackend b(make_builtin_model("adder"), backend_config(p.listen_address()));
        p.await_backend();
        p.free();
        b.wait();
    }
    const auto d = net::thread_audit() - before;
    CHECK(d.connect_attempts == 0);
    CHECK(d.connects == 0);
    CHECK(d.binds == 1);
    CHECK(d.listens == 1);
    CHECK(d.accepts == 1);
}

TEST_CASE("token comparison")
{
    CHECK(proxy::tokens_equal("s3cret", "s3cret"));
    CHECK_FALSE(proxy::tokens_equal("s3cret", "s3cre"));
    CHECK_FALSE(proxy::tokens_equal("s3cret", "s3cret!"));
    CHECK_FALSE(proxy::tokens_equal("s3cret", "S3cret"));
    CHECK_FALSE(proxy::tokens_equal("s3cret", ""));
    CHECK(proxy::tokens_equal("", ""));
}
