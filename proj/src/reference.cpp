#include "dcosim/reference.hpp"

#include "dcosim/error.hpp"

#include <json.hpp>

namespace dcosim {

namespace {

class LocalPort final : public master::UnitPort {
public:
    explicit LocalPort(Model& model) : model_(model) {}

    wire::Status do_step(double t, double h) override { return model_.do_step(t, h); }
    wire::Status set(const std::vector<std::uint32_t>& vrs, const wire::ValueArray& values) override
    {
        return model_.set(vrs, values);
    }
    wire::Status get(VariableType type, const std::vector<std::uint32_t>& vrs, wire::ValueArray& out) override
    {
        return model_.get(type, vrs, out);
    }

private:
    Model& model_;
};

void check(wire::Status status, const std::string& unit, const char* what)
{
    if (status != wire::Status::Ok && status != wire::Status::Warning) {
        throw Error("unit '" + unit + "': " + what + " returned " + std::string(wire::to_string(status)));
    }
}

void set_start_values(Model& model, Causality causality, const std::string& unit)
{
    for (auto type : kAllVariableTypes) {
        std::vector<std::uint32_t> vrs;
        auto values = wire::empty_values(type);
        for (const auto& v : model.descriptor().variables) {
            if (v.type != type || v.causality != causality || !v.start) continue;
            vrs.push_back(v.value_reference);
            wire::push_value(values, *v.start);
        }
        if (!vrs.empty()) check(model.set(vrs, values), unit, "start values");
    }
}

} // namespace

master::Trajectory run_local_cosimulation(const ScenarioConfig& scenario, std::vector<std::unique_ptr<Model>>& models)
{
    if (models.size() != scenario.units.size()) throw Error("one model per scenario unit required");

    std::vector<std::string> names;
    std::vector<LocalPort> ports;
    std::vector<master::UnitPort*> port_ptrs;
    ports.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        auto& model = *models[i];
        const auto& name = scenario.units[i].unit_name;
        names.push_back(name);
        check(model.setup_experiment(scenario.start_time, scenario.end_time, std::nullopt), name, "setup_experiment");
        set_start_values(model, Causality::Parameter, name);
        check(model.enter_initialization_mode(), name, "enter_initialization_mode");
        set_start_values(model, Causality::Input, name);
        check(model.exit_initialization_mode(), name, "exit_initialization_mode");
        ports.emplace_back(model);
    }
    for (auto& p : ports) port_ptrs.push_back(&p);

    const master::ExchangePlan plan(names, scenario.connections, scenario.captures);
    const master::PhaseRunner runner = master::run_sequential;
    plan.propagate(port_ptrs, -1, runner);

    master::Trajectory trajectory;
    trajectory.columns = plan.columns();
    const auto n = scenario.step_count();
    for (std::int64_t k = 0; k < n; ++k) {
        plan.step_all(port_ptrs, scenario.time_at(k), scenario.step_size, k, runner);
        trajectory.rows.push_back({k, scenario.time_at(k + 1), plan.propagate(port_ptrs, k, runner)});
    }
    for (std::size_t i = 0; i < models.size(); ++i) models[i]->terminate();
    return trajectory;
}

master::Trajectory run_reference_simulation(double step_size, double end_time)
{
    DemoLayout layout;
    layout.step_size = step_size;
    layout.end_time = end_time;
    const auto scenario = demo2_scenario(layout);

    std::vector<std::unique_ptr<Model>> models;
    for (const auto& u : scenario.units) models.push_back(make_builtin_model(u.unit_name));
    return run_local_cosimulation(scenario, models);
}

std::string demo2_scenario_json(const DemoLayout& layout, const std::string& descriptor_dir)
{
    nlohmann::json units = nlohmann::json::array();
    const char* names[] = {"controller", "motor", "generator"};
    for (int i = 0; i < 3; ++i) {
        const auto port = layout.base_port == 0 ? 0 : layout.base_port + i;
        std::string descriptor = std::string(names[i]) + ".json";
        if (!descriptor_dir.empty()) descriptor = descriptor_dir + "/" + descriptor;
        units.push_back({{"unit_name", names[i]},
                         {"descriptor", descriptor},
                         {"listen", layout.host + ":" + std::to_string(port)},
                         {"token", layout.token}});
    }
    nlohmann::json doc = {
        {"units", units},
        {"connections",
         {{{"source", "controller.tau_cmd"}, {"target", "motor.tau_cmd_in"}},
          {{"source", "motor.tau_mot"}, {"target", "generator.tau_in"}},
          {{"source", "generator.omega"}, {"target", "controller.omega_meas"}}}},
        {"step_size", layout.step_size},
        {"start_time", layout.start_time},
        {"end_time", layout.end_time},
        {"real_time", layout.real_time},
        {"output_path", layout.output_path},
    };
    return doc.dump(2);
}

ScenarioConfig demo2_scenario(const DemoLayout& layout)
{
    std::map<std::string, ModelDescriptor> descriptors;
    for (const char* name : {"controller", "motor", "generator"}) descriptors.emplace(name, *builtin_descriptor(name));
    // duplicate addresses are rejected, so ephemeral ports are substituted
    // after validation
    auto validated = layout;
    if (validated.base_port == 0) validated.base_port = 1;
    auto scenario = parse_scenario(demo2_scenario_json(validated, ""), descriptors);
    if (layout.base_port == 0) {
        for (auto& u : scenario.units) u.listen_address = layout.host + ":0";
    }
    return scenario;
}

} // namespace dcosim
