#pragma once

#include "dcosim/descriptor.hpp"
#include "dcosim/error.hpp"
#include "dcosim/wire.hpp"

#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace dcosim::master {

/// What the Jacobi schedule needs from a unit, whether it is a remote proxy
/// or an in-process model.
class UnitPort {
public:
    virtual ~UnitPort() = default;
    virtual wire::Status do_step(double current_time, double step_size) = 0;
    virtual wire::Status set(const std::vector<std::uint32_t>& vrs, const wire::ValueArray& values) = 0;
    virtual wire::Status get(VariableType type, const std::vector<std::uint32_t>& vrs, wire::ValueArray& out) = 0;
};

/// Runs one phase's per-unit jobs; jobs touch distinct units only.
using PhaseRunner = std::function<void(std::vector<std::function<void()>>& jobs)>;

void run_sequential(std::vector<std::function<void()>>& jobs);
/// One thread per job, joined before returning.
void run_overlapped(std::vector<std::function<void()>>& jobs);

/// Thrown when a unit answers a step or exchange call with a non-OK status.
class StepFailure : public Error {
public:
    StepFailure(std::string unit, std::int64_t step, wire::MessageKind kind, wire::Status status);
    const std::string& unit() const noexcept { return unit_; }
    std::int64_t step() const noexcept { return step_; }
    wire::Status status() const noexcept { return status_; }

private:
    std::string unit_;
    std::int64_t step_;
    wire::Status status_;
};

/// Output-to-input propagation plan for a fixed connection graph. All GETs
/// of a phase are issued before any SET, grouped into one call per
/// (unit, type); connection order decides the value order inside each call.
class ExchangePlan {
public:
    ExchangePlan(std::vector<std::string> unit_names, const std::vector<Connection>& connections,
                 const std::vector<VariableRef>& captures);

    /// Qualified names of the recorded outputs: connected sources in
    /// connection order, then extra captures.
    const std::vector<std::string>& columns() const noexcept { return columns_; }

    /// GET every source, SET every target. Returns the recorded outputs.
    std::vector<ScalarValue> propagate(std::vector<UnitPort*>& units, std::int64_t step, const PhaseRunner& runner) const;

    /// DO_STEP on every unit.
    void step_all(std::vector<UnitPort*>& units, double t, double h, std::int64_t step, const PhaseRunner& runner) const;

private:
    struct Group {
        std::size_t unit;
        VariableType type;
        std::vector<std::uint32_t> vrs;
    };
    struct Route {
        std::size_t source_group;
        std::size_t source_index;
        std::size_t target_group;
    };

    std::vector<std::string> unit_names_;
    std::vector<Group> gets_;
    std::vector<Group> sets_;
    std::vector<Route> routes_; // in target-group order, then value order
    std::vector<std::pair<std::size_t, std::size_t>> recorded_; // (get group, index)
    std::vector<std::string> columns_;
};

struct Trajectory {
    std::vector<std::string> columns;
    struct Row {
        std::int64_t step = 0;
        double time = 0.0; // communication point at the end of the step
        std::vector<ScalarValue> values;
        bool operator==(const Row&) const = default;
    };
    std::vector<Row> rows;

    /// `step,time,<columns>`; floats with 17 significant digits.
    std::string to_csv() const;
    std::size_t column(std::string_view name) const; // throws if absent
    double real(std::size_t row, std::string_view column_name) const;
};

std::string format_value(const ScalarValue& value);

} // namespace dcosim::master
