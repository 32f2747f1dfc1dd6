#pragma once

#include "dcosim/descriptor.hpp"
#include "dcosim/model.hpp"
#include "dcosim/schedule.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dcosim {

/// Runs a scenario's Jacobi schedule in-process against local models: the
/// same initialization sequence, propagation plan and clock as
/// master::CoSimSession, with no networking. `models` is parallel to
/// `scenario.units`.
master::Trajectory run_local_cosimulation(const ScenarioConfig& scenario, std::vector<std::unique_ptr<Model>>& models);

/// Demo 2 (controller -> motor -> generator -> controller) computed in one
/// process; the oracle distributed runs are certified against. Columns:
/// controller.tau_cmd, motor.tau_mot, generator.omega.
master::Trajectory run_reference_simulation(double step_size, double end_time);

struct DemoLayout {
    std::string host = "127.0.0.1";
    std::uint16_t base_port = 7001; // 0: ephemeral ports
    std::string token = "s3cret";
    double step_size = 0.1;
    double start_time = 0.0;
    double end_time = 50.0;
    bool real_time = false;
    std::string output_path = "trajectory.csv";
};

/// The three-unit Demo 2 scenario over built-in descriptors; unit i listens
/// on base_port + i.
ScenarioConfig demo2_scenario(const DemoLayout& layout);

/// Scenario document text (the on-disk format) for the same layout.
std::string demo2_scenario_json(const DemoLayout& layout, const std::string& descriptor_dir);

} // namespace dcosim
