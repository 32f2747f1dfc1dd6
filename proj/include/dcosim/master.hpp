#pragma once

#include "dcosim/descriptor.hpp"
#include "dcosim/metrics.hpp"
#include "dcosim/proxy.hpp"
#include "dcosim/schedule.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace dcosim::master {

using metrics::RunMode;

struct SessionOptions {
    net::Seconds accept_timeout{60.0};
    net::Seconds call_timeout{30.0};
    /// Issue each phase's calls to different units concurrently. Results are
    /// identical either way; only wall time changes.
    bool overlap_units = true;
    /// Called once every proxy is listening, before the first blocking
    /// accept. Receives the bound addresses in unit order.
    std::function<void(const std::vector<std::string>& addresses)> on_listening;
};

struct StepRecord {
    std::int64_t step = 0;
    double time = 0.0; // t_{k+1}
    double wall_seconds = 0.0;
    std::vector<ScalarValue> values;
};

struct RunResult {
    Trajectory trajectory;
    std::vector<metrics::TimingRecord> timing;
    std::optional<metrics::TimingReport> report; // absent for a zero-step run
    double elapsed_seconds = 0.0;

    /// `step,wall_seconds,overrun`.
    std::string timing_csv() const;
};

/// Unit index and name of an initialization that failed.
class InitializationFailure : public Error {
public:
    InitializationFailure(std::size_t unit_index, std::string unit_name, const std::string& why);
    std::size_t unit_index() const noexcept { return unit_index_; }
    const std::string& unit_name() const noexcept { return unit_name_; }

private:
    std::size_t unit_index_;
    std::string unit_name_;
};

/// Fixed-step Jacobi co-simulation over proxy-model pairs.
class CoSimSession {
public:
    /// Binds every unit's endpoint, then for each unit in declaration order:
    /// blocking instantiate, SETUP_EXPERIMENT(start, end), parameter start
    /// values, ENTER_INIT, input start values, EXIT_INIT. Finishes with one
    /// propagation so step 0 consumes well-defined inputs. Throws
    /// InitializationFailure after freeing every unit already set up.
    static CoSimSession initialize(const ScenarioConfig& scenario, SessionOptions options = {});

    CoSimSession(CoSimSession&&) noexcept;
    CoSimSession& operator=(CoSimSession&&) noexcept;
    ~CoSimSession();

    /// DO_STEP(t_k, h) on every unit, then propagate. Throws StepFailure.
    StepRecord step_once();

    /// Runs the remaining steps, then TERMINATE + free on all units (also on
    /// failure). RealTime sleeps until start + (k+1)·h after step k; a late
    /// step is counted as an overrun, never skipped.
    RunResult run(RunMode mode);

    /// TERMINATE where legal, then free every unit. Idempotent.
    void shutdown() noexcept;

    std::int64_t step_index() const noexcept;
    std::int64_t step_count() const noexcept;
    double current_time() const noexcept;
    const std::vector<std::string>& columns() const noexcept;
    proxy::ProxyInstance& unit(std::size_t index);
    std::size_t unit_count() const noexcept;

private:
    struct Impl;
    explicit CoSimSession(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

struct Demo1Options {
    std::string address = "127.0.0.1:7001";
    std::string token;
    std::int64_t iterations = 1000;
    double step_size = 0.01;
    RunMode mode = RunMode::AsFastAsPossible;
    net::Seconds accept_timeout{60.0};
    net::Seconds call_timeout{30.0};
    std::function<void(const std::string& address)> on_listening;
};

/// Demo 1 call pattern against one adder proxy: per iteration SET_REAL
/// (real_a=1, real_b=2), DO_STEP, GET_REAL(real_c), checking real_c == 3.
/// Lifecycle calls: SETUP_EXPERIMENT, ENTER_INIT, EXIT_INIT, TERMINATE,
/// FREE_INSTANCE, one each.
RunResult scripted_run_demo1(const Demo1Options& options);

/// Asks running sessions to stop after the current step; they then
/// terminate and free their units. Async-signal-safe.
void request_interrupt() noexcept;
bool interrupt_requested() noexcept;
void clear_interrupt() noexcept;

/// Thrown from a run loop stopped by request_interrupt().
class Interrupted : public Error {
public:
    Interrupted() : Error("interrupted") {}
};

/// Paces a loop of `count` steps. `body(k)` does the work of step k.
std::vector<metrics::TimingRecord> paced_loop(std::int64_t count, double step_size, RunMode mode,
                                              const std::function<void(std::int64_t)>& body, double& elapsed_seconds);

} // namespace dcosim::master
