#include "support.hpp"

#include "dcosim/process.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>

using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

Run cosim(std::vector<std::string> args)
{
    args.insert(args.begin(), COSIM_CLI_PATH);
    auto child = ChildProcess::spawn(args, true);
    const int code = child.wait();
    return {code, child.output()};
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("dcosim_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("--help lists every flag")
{
    const auto r = cosim({"--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"master", "backend", "demo1", "demo2", "report", "--scenario", "--mode", "--model",
                             "--connect", "--token", "--delay-ms", "--instance", "--iterations", "--step-size",
                             "--end-time", "--json", "--port", "--out-dir", "COSIM_TOKEN"}) {
        CAPTURE(flag);
        CHECK(r.out.find(flag) != std::string::npos);
    }
}

TEST_CASE("usage errors exit 1")
{
    CHECK(cosim({}).code == 1);
    CHECK(cosim({"frobnicate"}).code == 1);
    CHECK(cosim({"demo1", "--no-such-flag"}).code == 1);
    CHECK(cosim({"demo1", "--mode", "sideways"}).code == 1);
    CHECK(cosim({"backend", "--model", "pump", "--connect", "127.0.0.1:1"}).code == 1);
    CHECK(cosim({"master", "--scenario", "/nonexistent.json"}).code == 1);
}

TEST_CASE("demo1 fast writes 1000 rows of 3.0")
{
    const auto dir = scratch("demo1");
    const auto r = cosim({"--quiet", "demo1", "--mode", "fast", "--port", "0", "--out-dir", dir.string(), "--json"});
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    CHECK(doc["rows"] == 1000);
    CHECK(doc["backends"][0]["served"]["SET_REAL"] == 1000);
    std::istringstream csv(read_text((dir / "demo1_trajectory.csv").string()));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "step,time,adder.real_c");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        CHECK(line.substr(line.rfind(',') + 1) == "3");
    }
    CHECK(rows == 1000);
    CHECK(fs::exists(dir / "demo1_trajectory_timing.csv"));
    CHECK(fs::exists(dir / "demo1_trajectory_report.json"));
    fs::remove_all(dir);
}

TEST_CASE("demo commands leave their ports free")
{
    const auto dir = scratch("ports");
    // fixed ports twice in a row: the second run would fail to bind otherwise
    const std::string port = std::to_string(20000 + ::getpid() % 20000);
    for (int i = 0; i < 2; ++i) {
        const auto r = cosim({"--quiet", "demo2", "--port", port, "--end-time", "1.0", "--out-dir", dir.string()});
        CHECK(r.code == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("backend with the wrong token exits 3")
{
    auto proxy = proxy::ProxyInstance::listen(adder_descriptor(), "127.0.0.1:0", "s3cret",
                                              {"adder", net::Seconds(10), net::Seconds(10)});
    auto waiting = std::async(std::launch::async, [&] { proxy.await_backend(); });
    const auto bad = cosim({"--quiet", "backend", "--model", "adder", "--connect", proxy.listen_address(), "--token", "wrong"});
    CHECK(bad.code == 3);
    const auto report = backend::ExitReport::from_json(bad.out);
    CHECK(report.model_callbacks == 0);

    // token from the environment; flag absent
    ::setenv("COSIM_TOKEN", "s3cret", 1);
    auto good = ChildProcess::spawn({COSIM_CLI_PATH, "--quiet", "backend", "--model", "adder", "--connect", proxy.listen_address()}, true);
    ::unsetenv("COSIM_TOKEN");
    waiting.get();
    proxy.free();
    CHECK(good.wait() == 0);
}

TEST_CASE("flag wins over the environment token")
{
    auto proxy = proxy::ProxyInstance::listen(adder_descriptor(), "127.0.0.1:0", "s3cret",
                                              {"adder", net::Seconds(2), net::Seconds(10)});
    auto waiting = std::async(std::launch::async, [&] {
        try {
            proxy.await_backend();
        } catch (...) {
        }
    });
    ::setenv("COSIM_TOKEN", "s3cret", 1);
    const auto r = cosim({"--quiet", "backend", "--model", "adder", "--connect", proxy.listen_address(), "--token", "nope"});
    ::unsetenv("COSIM_TOKEN");
    CHECK(r.code == 3);
    waiting.get();
    proxy.free();
}

TEST_CASE("backend with nothing to connect to exits 2")
{
    std::string addr;
    {
        auto l = net::TcpListener::bind("127.0.0.1:0");
        addr = l.address();
    }
    const auto r = cosim({"--quiet", "backend", "--model", "adder", "--connect", addr, "--token", "x", "--attempts", "2",
                          "--retry-ms", "50"});
    CHECK(r.code == 2);
}

TEST_CASE("master from a scenario file, then report")
{
    const auto dir = scratch("master");
    const std::string port = std::to_string(20000 + (::getpid() + 7) % 20000);
    nlohmann::json doc = nlohmann::json::parse(read_text(DCOSIM_DATA_DIR "/demo1/scenario.json"));
    doc["units"][0]["descriptor"] = DCOSIM_DATA_DIR "/demo1/adder.json";
    doc["units"][0]["listen"] = "127.0.0.1:" + port;
    doc["end_time"] = 0.05;
    doc["output_path"] = (dir / "traj.csv").string();
    {
        std::ofstream(dir / "scenario.json") << doc.dump(2);
    }
    auto master = ChildProcess::spawn({COSIM_CLI_PATH, "--quiet", "master", "--scenario", (dir / "scenario.json").string(),
                                       "--label", "m1"},
                                      true);
    const auto b = cosim({"--quiet", "backend", "--model", "adder", "--connect", "127.0.0.1:" + port, "--token", "s3cret"});
    CHECK(master.wait() == 0);
    CHECK(b.code == 0);
    const auto csv = read_text((dir / "traj.csv").string());
    CHECK(csv.rfind("step,time,adder.real_c,adder.integer_c,adder.boolean_c,adder.string_c\n", 0) == 0);
    CHECK(csv.find("4,0.050000000000000003,0,0,false,\n") != std::string::npos);

    const auto rep = cosim({"report", (dir / "traj_report.json").string(), DCOSIM_DATA_DIR "/published_totals.csv", "--csv",
                            (dir / "cmp.csv").string()});
    CHECK(rep.code == 0);
    CHECK(rep.out.find("m1") != std::string::npos);
    CHECK(read_text((dir / "cmp.csv").string()).find("Demo 2|real-time|Setting 3") != std::string::npos);
    CHECK(cosim({"report", (dir / "traj_report.json").string()}).code == 1);
    fs::remove_all(dir);
}
