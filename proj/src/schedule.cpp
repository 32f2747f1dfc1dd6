#include "dcosim/schedule.hpp"

#include <cstdio>
#include <exception>
#include <thread>

namespace dcosim::master {

void run_sequential(std::vector<std::function<void()>>& jobs)
{
    for (auto& job : jobs) job();
}

void run_overlapped(std::vector<std::function<void()>>& jobs)
{
    if (jobs.size() <= 1) return run_sequential(jobs);
    std::vector<std::exception_ptr> errors(jobs.size());
    std::vector<std::thread> threads;
    threads.reserve(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        threads.emplace_back([&, i] {
            try {
                jobs[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

StepFailure::StepFailure(std::string unit, std::int64_t step, wire::MessageKind kind, wire::Status status)
    : Error("unit '" + unit + "' answered " + std::string(wire::to_string(kind)) + " with " +
            std::string(wire::to_string(status)) + " at step " + std::to_string(step)),
      unit_(std::move(unit)), step_(step), status_(status)
{
}

namespace {

bool ok(wire::Status s)
{
    return s == wire::Status::Ok || s == wire::Status::Warning;
}

template <typename Key>
std::size_t group_for(std::vector<Key>& groups, std::size_t unit, VariableType type)
{
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].unit == unit && groups[i].type == type) return i;
    }
    groups.push_back({unit, type, {}});
    return groups.size() - 1;
}

std::size_t add_get(auto& gets, const VariableRef& ref, std::size_t& group)
{
    group = group_for(gets, ref.unit, ref.type);
    auto& vrs = gets[group].vrs;
    for (std::size_t i = 0; i < vrs.size(); ++i) {
        if (vrs[i] == ref.value_reference) return i;
    }
    vrs.push_back(ref.value_reference);
    return vrs.size() - 1;
}

} // namespace

ExchangePlan::ExchangePlan(std::vector<std::string> unit_names, const std::vector<Connection>& connections,
                           const std::vector<VariableRef>& captures)
    : unit_names_(std::move(unit_names))
{
    std::vector<Route> unordered;
    auto record = [&](const VariableRef& ref) {
        const auto name = ref.qualified_name();
        for (const auto& c : columns_) {
            if (c == name) return;
        }
        std::size_t group = 0;
        const auto index = add_get(gets_, ref, group);
        recorded_.emplace_back(group, index);
        columns_.push_back(name);
    };

    for (const auto& c : connections) {
        std::size_t source_group = 0;
        const auto source_index = add_get(gets_, c.source, source_group);
        const auto target_group = group_for(sets_, c.target.unit, c.target.type);
        sets_[target_group].vrs.push_back(c.target.value_reference);
        unordered.push_back({source_group, source_index, target_group});
        record(c.source);
    }
    for (const auto& ref : captures) record(ref);

    // routes grouped by target so each SET's values are assembled in order
    for (std::size_t g = 0; g < sets_.size(); ++g) {
        for (const auto& r : unordered) {
            if (r.target_group == g) routes_.push_back(r);
        }
    }
}

void ExchangePlan::step_all(std::vector<UnitPort*>& units, double t, double h, std::int64_t step,
                            const PhaseRunner& runner) const
{
    std::vector<wire::Status> status(units.size(), wire::Status::Ok);
    std::vector<std::function<void()>> jobs;
    for (std::size_t u = 0; u < units.size(); ++u) {
        jobs.emplace_back([&, u] { status[u] = units[u]->do_step(t, h); });
    }
    runner(jobs);
    for (std::size_t u = 0; u < units.size(); ++u) {
        if (!ok(status[u])) throw StepFailure(unit_names_[u], step, wire::MessageKind::DoStep, status[u]);
    }
}

std::vector<ScalarValue> ExchangePlan::propagate(std::vector<UnitPort*>& units, std::int64_t step,
                                                 const PhaseRunner& runner) const
{
    // Jobs of one phase run concurrently, so each job handles one unit.
    auto per_unit = [&](const std::vector<Group>& groups, auto&& call) {
        std::vector<std::function<void()>> jobs;
        for (std::size_t u = 0; u < units.size(); ++u) {
            bool any = false;
            for (const auto& g : groups) any = any || g.unit == u;
            if (!any) continue;
            jobs.emplace_back([&, u] {
                for (std::size_t i = 0; i < groups.size(); ++i) {
                    if (groups[i].unit == u) call(i);
                }
            });
        }
        runner(jobs);
    };

    std::vector<wire::ValueArray> fetched(gets_.size());
    std::vector<wire::Status> get_status(gets_.size(), wire::Status::Ok);
    per_unit(gets_, [&](std::size_t i) {
        const auto& g = gets_[i];
        get_status[i] = units[g.unit]->get(g.type, g.vrs, fetched[i]);
    });
    for (std::size_t i = 0; i < gets_.size(); ++i) {
        if (!ok(get_status[i]) || wire::size_of(fetched[i]) != gets_[i].vrs.size()) {
            throw StepFailure(unit_names_[gets_[i].unit], step, wire::get_kind(gets_[i].type),
                              ok(get_status[i]) ? wire::Status::Error : get_status[i]);
        }
    }

    std::vector<wire::ValueArray> outgoing;
    outgoing.reserve(sets_.size());
    for (const auto& g : sets_) outgoing.push_back(wire::empty_values(g.type));
    for (const auto& r : routes_) {
        wire::push_value(outgoing[r.target_group], wire::value_at(fetched[r.source_group], r.source_index));
    }

    std::vector<wire::Status> set_status(sets_.size(), wire::Status::Ok);
    per_unit(sets_, [&](std::size_t i) { set_status[i] = units[sets_[i].unit]->set(sets_[i].vrs, outgoing[i]); });
    for (std::size_t i = 0; i < sets_.size(); ++i) {
        if (!ok(set_status[i])) {
            throw StepFailure(unit_names_[sets_[i].unit], step, wire::set_kind(sets_[i].type), set_status[i]);
        }
    }

    std::vector<ScalarValue> recorded;
    recorded.reserve(recorded_.size());
    for (const auto& [group, index] : recorded_) recorded.push_back(wire::value_at(fetched[group], index));
    return recorded;
}

std::string format_value(const ScalarValue& value)
{
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
                char buf[40];
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                return buf;
            } else if constexpr (std::is_same_v<T, std::int32_t>) {
                return std::to_string(v);
            } else if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else {
                if (v.find_first_of(",\"\n\r") == std::string::npos) return v;
                std::string quoted = "\"";
                for (char c : v) {
                    if (c == '"') quoted += '"';
                    quoted += c;
                }
                return quoted + "\"";
            }
        },
        value);
}

std::string Trajectory::to_csv() const
{
    std::string out = "step,time";
    for (const auto& c : columns) out += "," + c;
    out += '\n';
    for (const auto& row : rows) {
        out += std::to_string(row.step);
        out += ',';
        out += format_value(row.time);
        for (const auto& v : row.values) {
            out += ',';
            out += format_value(v);
        }
        out += '\n';
    }
    return out;
}

std::size_t Trajectory::column(std::string_view name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    throw Error("trajectory has no column '" + std::string(name) + "'");
}

double Trajectory::real(std::size_t row, std::string_view column_name) const
{
    return std::get<double>(rows.at(row).values.at(column(column_name)));
}

} // namespace dcosim::master
