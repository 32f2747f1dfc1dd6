#include "dcosim/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dcosim::metrics {

using json = nlohmann::json;

std::string_view to_string(RunMode mode) noexcept
{
    return mode == RunMode::RealTime ? "real-time" : "fast";
}

std::optional<RunMode> parse_run_mode(std::string_view text) noexcept
{
    if (text == "fast" || text == "AsFastAsPossible" || text == "no" || text == "No") return RunMode::AsFastAsPossible;
    if (text == "real-time" || text == "RealTime" || text == "yes" || text == "Yes") return RunMode::RealTime;
    return std::nullopt;
}

bool TimingReport::real_time_infeasible() const noexcept
{
    if (source == ReportSource::PublishedTotal && mode == RunMode::RealTime) {
        return elapsed_wall > static_cast<double>(steps) * step_size * (1.0 + kPublishedPacingMargin);
    }
    return average_step_time > step_size;
}

TimingReport finalize_report(std::span<const TimingRecord> records, double step_size, RunMode mode)
{
    if (records.empty()) throw std::invalid_argument("finalize_report: empty record list");

    TimingReport r;
    r.steps = records.size();
    r.step_size = step_size;
    r.mode = mode;

    std::vector<double> sorted;
    sorted.reserve(records.size());
    for (const auto& rec : records) {
        r.total_wall += rec.wall_duration;
        if (rec.overrun) ++r.overrun_count;
        sorted.push_back(rec.wall_duration);
    }
    std::sort(sorted.begin(), sorted.end());
    r.average_step_time = r.total_wall / static_cast<double>(r.steps);
    r.min_step_time = sorted.front();
    r.max_step_time = sorted.back();
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
    r.p95_step_time = sorted[std::max<std::size_t>(rank, 1) - 1];
    r.elapsed_wall = r.total_wall;
    return r;
}

std::string TimingReport::to_json() const
{
    json doc = {{"steps", steps},
                {"total_wall", total_wall},
                {"as_t", average_step_time},
                {"min", min_step_time},
                {"max", max_step_time},
                {"p95", p95_step_time},
                {"overruns", overrun_count},
                {"step_size", step_size},
                {"mode", to_string(mode)},
                {"elapsed_wall", elapsed_wall},
                {"cpu_seconds", cpu_seconds},
                {"source", source == ReportSource::Measured ? "measured" : "published_total"},
                {"infeasible", real_time_infeasible()}};
    return doc.dump();
}

TimingReport TimingReport::from_json(const std::string& text)
{
    const auto doc = json::parse(text);
    TimingReport r;
    r.steps = doc.at("steps").get<std::uint64_t>();
    r.total_wall = doc.at("total_wall").get<double>();
    r.average_step_time = doc.at("as_t").get<double>();
    r.min_step_time = doc.at("min").get<double>();
    r.max_step_time = doc.at("max").get<double>();
    r.p95_step_time = doc.at("p95").get<double>();
    r.overrun_count = doc.at("overruns").get<std::uint64_t>();
    r.step_size = doc.at("step_size").get<double>();
    const auto mode = parse_run_mode(doc.at("mode").get<std::string>());
    if (!mode) throw std::invalid_argument("unknown run mode in report");
    r.mode = *mode;
    r.elapsed_wall = doc.value("elapsed_wall", r.total_wall);
    r.cpu_seconds = doc.value("cpu_seconds", 0.0);
    r.source = doc.value("source", std::string("measured")) == "published_total" ? ReportSource::PublishedTotal
                                                                                   : ReportSource::Measured;
    return r;
}

std::string TimingReport::summary() const
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    auto line = [&out](const char* name, auto value, const char* unit) {
        out << "  " << std::left << std::setw(22) << name << std::right << std::setw(14) << value << ' ' << unit << '\n';
    };
    out << "timing report (" << to_string(mode) << ")\n";
    line("steps", steps, "");
    line("step size (dt)", step_size, "s");
    line("elapsed wall", elapsed_wall, "s");
    line("total step wall", total_wall, "s");
    line("average step (AS_t)", average_step_time, "s");
    line("min step", min_step_time, "s");
    line("max step", max_step_time, "s");
    line("p95 step", p95_step_time, "s");
    line("overruns", overrun_count, "");
    if (cpu_seconds > 0.0) line("process cpu", cpu_seconds, "s");
    out << "  real-time feasible: " << (real_time_infeasible() ? "NO (AS_t > dt)" : "yes") << '\n';
    return out.str();
}

const TimingReport* ComparisonTable::cell(std::string_view demo, RunMode mode, std::string_view label) const
{
    auto col = std::find(labels.begin(), labels.end(), label);
    if (col == labels.end()) return nullptr;
    for (const auto& row : rows) {
        if (row.demo == demo && row.mode == mode) {
            const auto& c = row.cells[static_cast<std::size_t>(col - labels.begin())];
            return c ? &*c : nullptr;
        }
    }
    return nullptr;
}

bool ComparisonTable::infeasible(std::string_view demo, RunMode mode, std::string_view label) const
{
    const auto* c = cell(demo, mode, label);
    return c && c->real_time_infeasible();
}

std::string ComparisonTable::to_text() const
{
    std::ostringstream out;
    out << std::left << std::setw(12) << "demo" << std::setw(11) << "mode";
    for (const auto& l : labels) out << std::right << std::setw(16) << l;
    out << '\n';
    for (const auto& row : rows) {
        out << std::left << std::setw(12) << row.demo << std::setw(11) << to_string(row.mode);
        for (const auto& c : row.cells) {
            std::string text = "-";
            if (c) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.4f%s", c->elapsed_wall, c->real_time_infeasible() ? "*" : "");
                text = buf;
            }
            out << std::right << std::setw(16) << text;
        }
        out << '\n';
    }
    out << "(elapsed seconds; * = real-time infeasible, AS_t > dt)\n";
    for (const auto& w : warnings) out << "warning: " << w << '\n';
    return out.str();
}

std::string ComparisonTable::to_csv() const
{
    std::ostringstream out;
    out << std::setprecision(17);
    out << "label,total_wall,as_t,min,max,p95,overruns,infeasible\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto& c = row.cells[i];
            if (!c) continue;
            out << row.demo << '|' << to_string(row.mode) << '|' << labels[i] << ',' << c->elapsed_wall << ','
                << c->average_step_time << ',' << c->min_step_time << ',' << c->max_step_time << ','
                << c->p95_step_time << ',' << c->overrun_count << ',' << (c->real_time_infeasible() ? "true" : "false")
                << '\n';
        }
    }
    return out.str();
}

std::string ComparisonTable::to_json() const
{
    json doc = {{"labels", labels}, {"warnings", warnings}, {"rows", json::array()}};
    for (const auto& row : rows) {
        json cells = json::array();
        for (const auto& c : row.cells) {
            cells.push_back(c ? json::parse(c->to_json()) : json(nullptr));
        }
        doc["rows"].push_back({{"demo", row.demo}, {"mode", to_string(row.mode)}, {"cells", std::move(cells)}});
    }
    return doc.dump();
}

ComparisonTable compare_runs(const std::vector<LabeledReport>& reports)
{
    if (reports.size() < 2) throw std::invalid_argument("compare_runs needs at least two reports");

    ComparisonTable table;
    for (const auto& r : reports) {
        if (std::find(table.labels.begin(), table.labels.end(), r.label) == table.labels.end()) {
            table.labels.push_back(r.label);
        }
    }
    for (const auto& r : reports) {
        auto row = std::find_if(table.rows.begin(), table.rows.end(),
                                [&](const auto& x) { return x.demo == r.demo && x.mode == r.report.mode; });
        if (row == table.rows.end()) {
            table.rows.push_back({r.demo, r.report.mode, std::vector<std::optional<TimingReport>>(table.labels.size())});
            row = std::prev(table.rows.end());
        }
        const auto col = static_cast<std::size_t>(
            std::find(table.labels.begin(), table.labels.end(), r.label) - table.labels.begin());
        if (row->cells[col]) {
            table.warnings.push_back("duplicate cell " + r.demo + "/" + std::string(to_string(r.report.mode)) + "/" +
                                     r.label + "; keeping the last report");
        }
        row->cells[col] = r.report;
    }
    for (const auto& row : table.rows) {
        std::optional<std::uint64_t> steps;
        for (const auto& c : row.cells) {
            if (!c) continue;
            if (steps && *steps != c->steps) {
                table.warnings.push_back("row " + row.demo + "/" + std::string(to_string(row.mode)) +
                                         " mixes step counts " + std::to_string(*steps) + " and " +
                                         std::to_string(c->steps));
                break;
            }
            steps = c->steps;
        }
    }
    return table;
}

std::vector<LabeledReport> load_published_totals(const std::string& csv_text)
{
    std::istringstream in(csv_text);
    std::string line;
    std::vector<LabeledReport> out;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            if (line != "demo,mode,label,total_wall,steps,step_size") {
                throw std::invalid_argument("published totals: unexpected header '" + line + "'");
            }
            header = false;
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 6) throw std::invalid_argument("published totals: line " + std::to_string(line_no) + " needs 6 fields");
        auto mode = parse_run_mode(fields[1]);
        if (!mode) throw std::invalid_argument("published totals: line " + std::to_string(line_no) + " has bad mode");

        TimingReport r;
        r.source = ReportSource::PublishedTotal;
        r.mode = *mode;
        r.elapsed_wall = std::stod(fields[3]);
        r.total_wall = r.elapsed_wall;
        r.steps = std::stoull(fields[4]);
        r.step_size = std::stod(fields[5]);
        r.average_step_time = r.elapsed_wall / static_cast<double>(r.steps);
        r.min_step_time = r.max_step_time = r.p95_step_time = r.average_step_time;
        out.push_back({fields[0], fields[2], r});
    }
    return out;
}

LabeledReport read_labeled_report(const std::string& json_text)
{
    const auto doc = json::parse(json_text);
    LabeledReport r;
    r.demo = doc.at("demo").get<std::string>();
    r.label = doc.at("label").get<std::string>();
    r.report = TimingReport::from_json(doc.at("timing").dump());
    return r;
}

std::string write_labeled_report(const LabeledReport& report)
{
    json doc = {{"demo", report.demo}, {"label", report.label}, {"timing", json::parse(report.report.to_json())}};
    return doc.dump(2);
}

} // namespace dcosim::metrics
