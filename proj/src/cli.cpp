#include "dcosim/cli.hpp"

#include "dcosim/backend.hpp"
#include "dcosim/error.hpp"
#include "dcosim/log.hpp"
#include "dcosim/master.hpp"
#include "dcosim/process.hpp"
#include "dcosim/reference.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dcosim::cli {

namespace fs = std::filesystem;
using metrics::RunMode;

namespace {

struct GlobalFlags {
    bool quiet = false;
};

struct MasterFlags {
    std::string scenario;
    std::string mode;
    double accept_timeout = 60.0;
    double call_timeout = 30.0;
    bool sequential = false;
    bool json = false;
    std::string label = "run";
};

struct BackendFlags {
    std::string model;
    std::string connect;
    std::string token;
    int delay_ms = 0;
    std::string instance;
    int attempts = 5;
    int retry_ms = 500;
};

struct DemoFlags {
    std::int64_t iterations = 1000;
    double step_size = 0.01;
    double end_time = 50.0;
    std::string mode = "fast";
    int delay_ms = 0;
    std::string host = "127.0.0.1";
    int port = 7001;
    std::string token = "s3cret";
    std::string out_dir = ".";
    std::string label = "loopback";
    double accept_timeout = 60.0;
    bool sequential = false;
    bool json = false;
};

struct ReportFlags {
    std::vector<std::string> inputs;
    std::string csv;
    bool json = false;
};

void on_sigint(int)
{
    master::request_interrupt();
}

void install_interrupt_handler()
{
    struct sigaction sa {};
    sa.sa_handler = on_sigint;
    sigemptyset(&sa.sa_mask);
    ::sigaction(SIGINT, &sa, nullptr);
    ::sigaction(SIGTERM, &sa, nullptr);
}

void write_file(const fs::path& path, const std::string& content)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path, "cannot open file");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunMode mode_or_throw(const std::string& text)
{
    auto mode = metrics::parse_run_mode(text);
    if (!mode) throw ValidationError("--mode", "expected 'fast' or 'real-time', got '" + text + "'");
    return *mode;
}

/// Writes trajectory/timing CSVs and the labelled report next to `trajectory_path`.
metrics::LabeledReport write_outputs(const master::RunResult& result, const fs::path& trajectory_path,
                                     const std::string& demo, const std::string& label)
{
    write_file(trajectory_path, result.trajectory.to_csv());
    const auto stem = trajectory_path.parent_path() / trajectory_path.stem();
    write_file(stem.string() + "_timing.csv", result.timing_csv());
    metrics::LabeledReport labeled{demo, label, result.report.value_or(metrics::TimingReport{})};
    if (result.report) write_file(stem.string() + "_report.json", metrics::write_labeled_report(labeled));
    return labeled;
}

void print_result(const master::RunResult& result, const metrics::LabeledReport& labeled,
                  const std::vector<backend::ExitReport>& backends, bool json)
{
    if (json) {
        nlohmann::json doc = nlohmann::json::parse(metrics::write_labeled_report(labeled));
        doc["rows"] = result.trajectory.rows.size();
        doc["backends"] = nlohmann::json::array();
        for (const auto& b : backends) doc["backends"].push_back(nlohmann::json::parse(b.to_json()));
        std::cout << doc.dump() << std::endl;
        return;
    }
    std::cout << labeled.demo << " [" << labeled.label << "]: " << result.trajectory.rows.size() << " steps\n";
    if (result.report) std::cout << result.report->summary();
    for (const auto& b : backends) std::cout << "backend " << b.to_json() << '\n';
    std::cout.flush();
}

/// Spawns `cosim backend` children and collects their exit reports.
class BackendFleet {
public:
    BackendFleet(std::string token, bool quiet) : token_(std::move(token)), quiet_(quiet) {}

    void launch(const std::string& model, const std::string& address, int delay_ms)
    {
        std::vector<std::string> argv = {self_executable()};
        if (quiet_) argv.push_back("--quiet");
        argv.insert(argv.end(), {"backend", "--model", model, "--connect", address, "--instance", model,
                                 "--delay-ms", std::to_string(delay_ms)});
        // token travels through the environment, not the process table
        ::setenv("COSIM_TOKEN", token_.c_str(), 1);
        children_.push_back(ChildProcess::spawn(argv, true));
        ::unsetenv("COSIM_TOKEN");
    }

    /// Waits for every child; returns their reports in launch order.
    std::vector<backend::ExitReport> collect()
    {
        std::vector<backend::ExitReport> reports;
        for (auto& child : children_) {
            const int code = child.wait();
            backend::ExitReport report;
            std::istringstream lines(child.output());
            std::string line, last;
            while (std::getline(lines, line)) {
                if (!line.empty()) last = line;
            }
            try {
                report = backend::ExitReport::from_json(last);
            } catch (const std::exception&) {
                report.outcome = backend::Outcome::ProtocolFailure;
                report.error = "backend exited with code " + std::to_string(code) + " and no report";
            }
            reports.push_back(std::move(report));
        }
        children_.clear();
        return reports;
    }

    void kill_all() noexcept
    {
        for (auto& c : children_) c.kill();
    }

private:
    std::string token_;
    bool quiet_;
    std::vector<ChildProcess> children_;
};

int fleet_exit_code(const std::vector<backend::ExitReport>& reports)
{
    for (const auto& r : reports) {
        if (backend::exit_code(r.outcome) != 0) {
            std::cerr << "backend '" << r.instance_name << "' failed: " << backend::to_string(r.outcome)
                      << (r.error.empty() ? "" : " (" + r.error + ")") << '\n';
            return kRuntimeError;
        }
    }
    return kSuccess;
}

int cmd_master(const MasterFlags& f)
{
    auto scenario = load_scenario(f.scenario);
    RunMode mode = scenario.real_time ? RunMode::RealTime : RunMode::AsFastAsPossible;
    if (!f.mode.empty()) mode = mode_or_throw(f.mode);

    master::SessionOptions options;
    options.accept_timeout = net::Seconds(f.accept_timeout);
    options.call_timeout = net::Seconds(f.call_timeout);
    options.overlap_units = !f.sequential;
    auto session = master::CoSimSession::initialize(scenario, options);
    auto result = session.run(mode);

    const auto labeled = write_outputs(result, scenario.output_path, "scenario", f.label);
    print_result(result, labeled, {}, f.json);
    return kSuccess;
}

int cmd_backend(const BackendFlags& f)
{
    auto model = make_builtin_model(f.model);
    if (!model) throw ValidationError("--model", "unknown model '" + f.model + "'");
    split_address(f.connect);

    backend::BackendConfig config;
    config.proxy_address = f.connect;
    config.instance_name = f.instance.empty() ? f.model : f.instance;
    config.auth_token = f.token;
    if (config.auth_token.empty()) {
        if (const char* env = std::getenv("COSIM_TOKEN")) config.auth_token = env;
    }
    if (f.delay_ms < 0) throw ValidationError("--delay-ms", "must be >= 0");
    config.reply_delay = std::chrono::milliseconds(f.delay_ms);
    config.connect_attempts = f.attempts;
    config.retry_interval = std::chrono::milliseconds(f.retry_ms);

    const auto report = backend::connect_and_serve(*model, config);
    std::cout << report.to_json() << std::endl;
    return backend::exit_code(report.outcome);
}

int cmd_demo1(const DemoFlags& f, const GlobalFlags& g)
{
    if (f.iterations < 0) throw ValidationError("--iterations", "must be >= 0");
    if (!(f.step_size > 0.0)) throw ValidationError("--step-size", "must be > 0");
    BackendFleet fleet(f.token, g.quiet);

    master::Demo1Options options;
    options.address = f.host + ":" + std::to_string(f.port);
    options.token = f.token;
    options.iterations = f.iterations;
    options.step_size = f.step_size;
    options.mode = mode_or_throw(f.mode);
    options.accept_timeout = net::Seconds(f.accept_timeout);
    options.on_listening = [&](const std::string& address) { fleet.launch("adder", address, f.delay_ms); };

    master::RunResult result;
    try {
        result = master::scripted_run_demo1(options);
    } catch (...) {
        fleet.kill_all();
        throw;
    }
    const auto backends = fleet.collect();
    const auto labeled = write_outputs(result, fs::path(f.out_dir) / "demo1_trajectory.csv", "Demo 1", f.label);
    print_result(result, labeled, backends, f.json);
    return fleet_exit_code(backends);
}

int cmd_demo2(const DemoFlags& f, const GlobalFlags& g)
{
    DemoLayout layout;
    layout.host = f.host;
    layout.base_port = static_cast<std::uint16_t>(f.port);
    layout.token = f.token;
    layout.step_size = f.step_size;
    layout.end_time = f.end_time;
    const auto mode = mode_or_throw(f.mode);
    layout.real_time = mode == RunMode::RealTime;
    const auto scenario = demo2_scenario(layout);

    BackendFleet fleet(f.token, g.quiet);
    master::SessionOptions options;
    options.accept_timeout = net::Seconds(f.accept_timeout);
    options.overlap_units = !f.sequential;
    options.on_listening = [&](const std::vector<std::string>& addresses) {
        for (std::size_t i = 0; i < addresses.size(); ++i) {
            fleet.launch(scenario.units[i].unit_name, addresses[i], f.delay_ms);
        }
    };

    master::RunResult result;
    try {
        auto session = master::CoSimSession::initialize(scenario, options);
        result = session.run(mode);
    } catch (...) {
        fleet.kill_all();
        throw;
    }
    const auto backends = fleet.collect();
    const auto labeled = write_outputs(result, fs::path(f.out_dir) / "demo2_trajectory.csv", "Demo 2", f.label);
    print_result(result, labeled, backends, f.json);
    return fleet_exit_code(backends);
}

int cmd_report(const ReportFlags& f)
{
    std::vector<metrics::LabeledReport> reports;
    for (const auto& path : f.inputs) {
        const auto text = read_file(path);
        if (fs::path(path).extension() == ".csv") {
            for (auto& r : metrics::load_published_totals(text)) reports.push_back(std::move(r));
        } else {
            reports.push_back(metrics::read_labeled_report(text));
        }
    }
    if (reports.size() < 2) throw ValidationError("inputs", "need at least two reports to compare");
    const auto table = metrics::compare_runs(reports);
    if (!f.csv.empty()) write_file(f.csv, table.to_csv());
    if (f.json) {
        std::cout << table.to_json() << std::endl;
    } else {
        std::cout << table.to_text();
    }
    return kSuccess;
}

std::string flag_summary(CLI::App& app)
{
    std::ostringstream out;
    out << "\nSubcommand flags:\n";
    for (auto* sub : app.get_subcommands({})) {
        out << "  " << sub->get_name() << ':';
        for (const auto* opt : sub->get_options()) {
            const auto name = opt->get_name(false, true);
            if (name.rfind("--", 0) == 0 && name != "--help") out << ' ' << name;
        }
        out << '\n';
    }
    out << "Environment: COSIM_TOKEN supplies the backend token when --token is absent.\n";
    return out.str();
}

} // namespace

int run_command(int argc, const char* const* argv)
{
    CLI::App app{"Distributed co-simulation: proxies on the orchestration host, models dial in from trusted machines",
                 "cosim"};
    app.require_subcommand(1);

    GlobalFlags global;
    app.add_flag("-q,--quiet", global.quiet, "Suppress event log lines on stderr");

    MasterFlags mf;
    auto* master_cmd = app.add_subcommand("master", "Run a co-simulation master from a scenario file");
    master_cmd->add_option("--scenario", mf.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
    master_cmd->add_option("--mode", mf.mode, "Override the scenario's mode: fast | real-time");
    master_cmd->add_option("--accept-timeout", mf.accept_timeout, "Seconds to wait for each backend")->capture_default_str();
    master_cmd->add_option("--call-timeout", mf.call_timeout, "Seconds to wait for each reply")->capture_default_str();
    master_cmd->add_flag("--sequential", mf.sequential, "Call units one after another within each phase");
    master_cmd->add_option("--label", mf.label, "Column label in timing reports")->capture_default_str();
    master_cmd->add_flag("--json", mf.json, "Print the summary as JSON");

    BackendFlags bf;
    auto* backend_cmd = app.add_subcommand("backend", "Serve a built-in model to a proxy (dials out)");
    backend_cmd->add_option("--model", bf.model, "adder | controller | motor | generator")->required();
    backend_cmd->add_option("--connect", bf.connect, "Proxy address host:port")->required();
    backend_cmd->add_option("--token", bf.token, "Authentication token (default: $COSIM_TOKEN)");
    backend_cmd->add_option("--delay-ms", bf.delay_ms, "Delay injected before every message sent")->capture_default_str();
    backend_cmd->add_option("--instance", bf.instance, "Instance name announced in the handshake");
    backend_cmd->add_option("--attempts", bf.attempts, "Connection attempts")->capture_default_str();
    backend_cmd->add_option("--retry-ms", bf.retry_ms, "Pause between connection attempts")->capture_default_str();

    DemoFlags d1;
    auto* demo1_cmd = app.add_subcommand("demo1", "Adder demo: SET_REAL, DO_STEP, GET_REAL per iteration");
    demo1_cmd->add_option("--iterations", d1.iterations, "Loop iterations")->capture_default_str();
    demo1_cmd->add_option("--step-size", d1.step_size, "Step size in seconds")->capture_default_str();

    DemoFlags d2;
    d2.step_size = 0.1;
    auto* demo2_cmd = app.add_subcommand("demo2", "Test bench demo: controller, motor, generator");
    demo2_cmd->add_option("--step-size", d2.step_size, "Step size in seconds")->capture_default_str();
    demo2_cmd->add_option("--end-time", d2.end_time, "Simulated horizon in seconds")->capture_default_str();
    demo2_cmd->add_flag("--sequential", d2.sequential, "Call units one after another within each phase");

    for (auto [cmd, flags] : {std::pair{demo1_cmd, &d1}, std::pair{demo2_cmd, &d2}}) {
        cmd->add_option("--mode", flags->mode, "fast | real-time")->capture_default_str();
        cmd->add_option("--delay-ms", flags->delay_ms, "Delay each backend injects per message")->capture_default_str();
        cmd->add_option("--host", flags->host, "Loopback host for the proxies")->capture_default_str();
        cmd->add_option("--port", flags->port, "First proxy port (0: ephemeral)")->capture_default_str();
        cmd->add_option("--token", flags->token, "Shared authentication token")->capture_default_str();
        cmd->add_option("--out-dir", flags->out_dir, "Directory for CSV and report files")->capture_default_str();
        cmd->add_option("--label", flags->label, "Column label in timing reports")->capture_default_str();
        cmd->add_option("--accept-timeout", flags->accept_timeout, "Seconds to wait for each backend")->capture_default_str();
        cmd->add_flag("--json", flags->json, "Print the summary as JSON");
    }

    ReportFlags rf;
    auto* report_cmd = app.add_subcommand("report", "Compare timing reports in a table");
    report_cmd->add_option("inputs", rf.inputs, "Report JSON files or published-totals CSV files")->required();
    report_cmd->add_option("--csv", rf.csv, "Also write the comparison as CSV");
    report_cmd->add_flag("--json", rf.json, "Print the comparison as JSON");

    app.footer(flag_summary(app));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidationError;
    }

    if (global.quiet) log::set_sink([](std::string_view) {});
    install_interrupt_handler();

    try {
        if (*master_cmd) return cmd_master(mf);
        if (*backend_cmd) return cmd_backend(bf);
        if (*demo1_cmd) return cmd_demo1(d1, global);
        if (*demo2_cmd) return cmd_demo2(d2, global);
        if (*report_cmd) return cmd_report(rf);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidationError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kValidationError;
}

int run_command(const std::vector<std::string>& args)
{
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_command(static_cast<int>(argv.size()), argv.data());
}

} // namespace dcosim::cli
