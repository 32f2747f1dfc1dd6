#include "dcosim/master.hpp"

#include "dcosim/log.hpp"
#include "dcosim/model.hpp"

#include <atomic>
#include <ctime>
#include <thread>

namespace dcosim::master {

using proxy::InstanceState;
using proxy::ProxyInstance;

namespace {

class ProxyPort final : public UnitPort {
public:
    explicit ProxyPort(ProxyInstance& proxy) : proxy_(proxy) {}

    wire::Status do_step(double t, double h) override { return proxy_.do_step(t, h).status; }

    wire::Status set(const std::vector<std::uint32_t>& vrs, const wire::ValueArray& values) override
    {
        return proxy_.set(vrs, values).status;
    }

    wire::Status get(VariableType type, const std::vector<std::uint32_t>& vrs, wire::ValueArray& out) override
    {
        auto r = proxy_.get(type, vrs);
        out = r.values ? std::move(*r.values) : wire::empty_values(type);
        return r.status;
    }

private:
    ProxyInstance& proxy_;
};

void require_ok(const proxy::CallResult& r, const std::string& what)
{
    if (!r.ok()) {
        throw Error(what + " returned " + std::string(wire::to_string(r.status)) + (r.error.empty() ? "" : ": " + r.error));
    }
}

/// SETs the start values of every variable with `causality`, one call per type.
void set_start_values(ProxyInstance& proxy, Causality causality)
{
    for (auto type : kAllVariableTypes) {
        std::vector<std::uint32_t> vrs;
        auto values = wire::empty_values(type);
        for (const auto& v : proxy.descriptor().variables) {
            if (v.type != type || v.causality != causality || !v.start) continue;
            vrs.push_back(v.value_reference);
            wire::push_value(values, *v.start);
        }
        if (vrs.empty()) continue;
        require_ok(proxy.set(std::move(vrs), std::move(values)),
                   "start values (" + std::string(to_string(causality)) + ", " + std::string(to_string(type)) + ")");
    }
}

double process_cpu_seconds()
{
    return static_cast<double>(std::clock()) / CLOCKS_PER_SEC;
}

std::atomic<bool> g_interrupt{false};

} // namespace

void request_interrupt() noexcept { g_interrupt.store(true); }
bool interrupt_requested() noexcept { return g_interrupt.load(); }
void clear_interrupt() noexcept { g_interrupt.store(false); }

std::string RunResult::timing_csv() const
{
    std::string out = "step,wall_seconds,overrun\n";
    for (const auto& r : timing) {
        out += std::to_string(r.step_index) + "," + format_value(r.wall_duration) + "," + (r.overrun ? "1" : "0") + "\n";
    }
    return out;
}

InitializationFailure::InitializationFailure(std::size_t unit_index, std::string unit_name, const std::string& why)
    : Error("initialization of unit " + std::to_string(unit_index + 1) + " ('" + unit_name + "') failed: " + why),
      unit_index_(unit_index), unit_name_(std::move(unit_name))
{
}

std::vector<metrics::TimingRecord> paced_loop(std::int64_t count, double step_size, RunMode mode,
                                              const std::function<void(std::int64_t)>& body, double& elapsed_seconds)
{
    using Clock = std::chrono::steady_clock;
    std::vector<metrics::TimingRecord> records;
    records.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
    const auto wall_start = Clock::now();
    for (std::int64_t k = 0; k < count; ++k) {
        if (interrupt_requested()) throw Interrupted();
        const auto begin = Clock::now();
        body(k);
        const auto end = Clock::now();
        metrics::TimingRecord rec{k, std::chrono::duration<double>(end - begin).count(), false};
        if (mode == RunMode::RealTime) {
            const auto deadline = wall_start + std::chrono::duration_cast<Clock::duration>(
                                                   std::chrono::duration<double>(static_cast<double>(k + 1) * step_size));
            if (end > deadline) {
                rec.overrun = true;
            } else {
                std::this_thread::sleep_until(deadline);
            }
        }
        records.push_back(rec);
    }
    elapsed_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
    return records;
}

struct CoSimSession::Impl {
    ScenarioConfig scenario;
    SessionOptions options;
    std::vector<ProxyInstance> units;
    std::vector<std::unique_ptr<ProxyPort>> ports;
    std::vector<UnitPort*> port_ptrs;
    std::optional<ExchangePlan> plan;
    std::int64_t k = 0;
    std::int64_t n = 0;
    bool shut_down = false;

    PhaseRunner runner() const
    {
        return options.overlap_units ? PhaseRunner(run_overlapped) : PhaseRunner(run_sequential);
    }

    void shutdown() noexcept
    {
        if (shut_down) return;
        shut_down = true;
        for (auto& u : units) {
            if (u.state() == InstanceState::StepMode) {
                try {
                    u.terminate();
                } catch (...) {
                }
            }
            u.free();
        }
    }
};

CoSimSession::CoSimSession(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
CoSimSession::CoSimSession(CoSimSession&&) noexcept = default;
CoSimSession& CoSimSession::operator=(CoSimSession&& other) noexcept
{
    if (this != &other) {
        shutdown();
        impl_ = std::move(other.impl_);
    }
    return *this;
}

CoSimSession::~CoSimSession()
{
    shutdown();
}

CoSimSession CoSimSession::initialize(const ScenarioConfig& scenario, SessionOptions options)
{
    auto impl = std::make_unique<Impl>();
    impl->scenario = scenario;
    impl->options = std::move(options);
    impl->n = scenario.step_count();
    auto& d = *impl;

    std::size_t current = 0;
    auto fail = [&](const std::string& why) -> InitializationFailure {
        d.shutdown();
        const auto& name = scenario.units[current].unit_name;
        log::event("error", name, "reason=\"initialization failed: " + why + "\"");
        return InitializationFailure(current, name, why);
    };

    try {
        for (current = 0; current < scenario.units.size(); ++current) {
            const auto& u = scenario.units[current];
            d.units.push_back(ProxyInstance::listen(scenario.descriptors[current], u.listen_address, u.auth_token,
                                                    {u.unit_name, d.options.accept_timeout, d.options.call_timeout}));
        }
    } catch (const std::exception& e) {
        throw fail(e.what());
    }

    if (d.options.on_listening) {
        std::vector<std::string> addresses;
        for (const auto& u : d.units) addresses.push_back(u.listen_address());
        d.options.on_listening(addresses);
    }

    try {
        for (current = 0; current < d.units.size(); ++current) {
            auto& proxy = d.units[current];
            proxy.await_backend();
            require_ok(proxy.setup_experiment(scenario.start_time, scenario.end_time), "SETUP_EXPERIMENT");
            set_start_values(proxy, Causality::Parameter);
            require_ok(proxy.enter_initialization_mode(), "ENTER_INIT");
            set_start_values(proxy, Causality::Input);
            require_ok(proxy.exit_initialization_mode(), "EXIT_INIT");
        }
    } catch (const std::exception& e) {
        throw fail(e.what());
    }

    std::vector<std::string> names;
    for (const auto& u : scenario.units) names.push_back(u.unit_name);
    d.plan.emplace(std::move(names), scenario.connections, scenario.captures);
    for (auto& u : d.units) {
        d.ports.push_back(std::make_unique<ProxyPort>(u));
        d.port_ptrs.push_back(d.ports.back().get());
    }
    try {
        d.plan->propagate(d.port_ptrs, -1, d.runner());
    } catch (const StepFailure& e) {
        d.shutdown();
        throw;
    }
    return CoSimSession(std::move(impl));
}

StepRecord CoSimSession::step_once()
{
    auto& d = *impl_;
    if (d.shut_down) throw Error("session is shut down");
    if (d.k >= d.n) throw Error("session already completed all " + std::to_string(d.n) + " steps");

    const auto begin = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step = d.k;
    const double t = d.scenario.time_at(d.k);
    d.plan->step_all(d.port_ptrs, t, d.scenario.step_size, d.k, d.runner());
    rec.values = d.plan->propagate(d.port_ptrs, d.k, d.runner());
    ++d.k;
    rec.time = d.scenario.time_at(d.k);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    return rec;
}

RunResult CoSimSession::run(RunMode mode)
{
    auto& d = *impl_;
    RunResult result;
    result.trajectory.columns = d.plan->columns();
    const double cpu_start = process_cpu_seconds();
    try {
        result.timing = paced_loop(
            d.n - d.k, d.scenario.step_size, mode,
            [&](std::int64_t) {
                auto rec = step_once();
                result.trajectory.rows.push_back({rec.step, rec.time, std::move(rec.values)});
            },
            result.elapsed_seconds);
    } catch (...) {
        shutdown();
        throw;
    }
    for (std::size_t i = 0; i < result.timing.size(); ++i) result.timing[i].step_index = result.trajectory.rows[i].step;
    const double cpu = process_cpu_seconds() - cpu_start;
    shutdown();

    if (!result.timing.empty()) {
        result.report = metrics::finalize_report(result.timing, d.scenario.step_size, mode);
        result.report->elapsed_wall = result.elapsed_seconds;
        result.report->cpu_seconds = cpu;
    }
    return result;
}

void CoSimSession::shutdown() noexcept
{
    if (impl_) impl_->shutdown();
}

std::int64_t CoSimSession::step_index() const noexcept { return impl_->k; }
std::int64_t CoSimSession::step_count() const noexcept { return impl_->n; }
double CoSimSession::current_time() const noexcept { return impl_->scenario.time_at(impl_->k); }
const std::vector<std::string>& CoSimSession::columns() const noexcept { return impl_->plan->columns(); }
proxy::ProxyInstance& CoSimSession::unit(std::size_t index) { return impl_->units.at(index); }
std::size_t CoSimSession::unit_count() const noexcept { return impl_->units.size(); }

RunResult scripted_run_demo1(const Demo1Options& options)
{
    auto proxy = ProxyInstance::listen(adder_descriptor(), options.address, options.token,
                                       {"adder", options.accept_timeout, options.call_timeout});
    if (options.on_listening) options.on_listening(proxy.listen_address());
    proxy.await_backend();

    const double stop = static_cast<double>(options.iterations) * options.step_size;
    require_ok(proxy.setup_experiment(0.0, stop), "SETUP_EXPERIMENT");
    require_ok(proxy.enter_initialization_mode(), "ENTER_INIT");
    require_ok(proxy.exit_initialization_mode(), "EXIT_INIT");

    RunResult result;
    result.trajectory.columns = {"adder.real_c"};
    const double cpu_start = process_cpu_seconds();
    result.timing = paced_loop(
        options.iterations, options.step_size, options.mode,
        [&](std::int64_t k) {
            const double t = static_cast<double>(k) * options.step_size;
            require_ok(proxy.set({0, 1}, std::vector<double>{1.0, 2.0}), "SET_REAL");
            require_ok(proxy.do_step(t, options.step_size), "DO_STEP");
            auto got = proxy.get(VariableType::Real, {2});
            require_ok(got, "GET_REAL");
            const auto& values = std::get<std::vector<double>>(*got.values);
            if (values.size() != 1 || values[0] != 3.0) {
                throw Error("iteration " + std::to_string(k) + ": real_c = " +
                            (values.empty() ? std::string("<none>") : format_value(values[0])) + ", expected 3");
            }
            result.trajectory.rows.push_back({k, static_cast<double>(k + 1) * options.step_size, {values[0]}});
        },
        result.elapsed_seconds);
    const double cpu = process_cpu_seconds() - cpu_start;

    require_ok(proxy.terminate(), "TERMINATE");
    proxy.free();

    if (!result.timing.empty()) {
        result.report = metrics::finalize_report(result.timing, options.step_size, options.mode);
        result.report->elapsed_wall = result.elapsed_seconds;
        result.report->cpu_seconds = cpu;
    }
    return result;
}

} // namespace dcosim::master
