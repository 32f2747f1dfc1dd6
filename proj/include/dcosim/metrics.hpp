#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dcosim::metrics {

enum class RunMode { AsFastAsPossible, RealTime };

std::string_view to_string(RunMode mode) noexcept;
/// Accepts "fast" / "real-time" (and the enum spellings).
std::optional<RunMode> parse_run_mode(std::string_view text) noexcept;

struct TimingRecord {
    std::int64_t step_index = 0;
    double wall_duration = 0.0; // seconds of work for the step, pacing sleep excluded
    bool overrun = false;       // finished after its real-time deadline
};

/// Where a report's numbers came from. Published rows carry only the elapsed
/// total of a run, so per-step statistics are derived from it.
enum class ReportSource { Measured, PublishedTotal };

inline constexpr double kPublishedPacingMargin = 0.05;

struct TimingReport {
    std::uint64_t steps = 0;
    double total_wall = 0.0;        // sum of step durations
    double average_step_time = 0.0; // AS_t
    double min_step_time = 0.0;
    double max_step_time = 0.0;
    double p95_step_time = 0.0;
    std::uint64_t overrun_count = 0;
    double step_size = 0.0;         // Δt
    RunMode mode = RunMode::AsFastAsPossible;
    double elapsed_wall = 0.0;      // whole stepping loop, pacing included
    double cpu_seconds = 0.0;       // process CPU time over the loop, if measured
    ReportSource source = ReportSource::Measured;

    /// AS_t > Δt for measured runs. A published paced total also carries
    /// session setup and teardown, so it counts as behind only past
    /// N·Δt·(1 + kPublishedPacingMargin).
    bool real_time_infeasible() const noexcept;

    std::string to_json() const;
    static TimingReport from_json(const std::string& text);
    /// Aligned multi-line summary.
    std::string summary() const;
};

/// Aggregates per-step records. p95 uses the nearest-rank method.
/// Throws std::invalid_argument on an empty list.
TimingReport finalize_report(std::span<const TimingRecord> records, double step_size, RunMode mode);

/// A report from one run, labelled the way Table-2-style comparisons are:
/// one row per (demo, mode), one column per label (e.g. network setting).
struct LabeledReport {
    std::string demo;
    std::string label;
    TimingReport report;
};

struct ComparisonTable {
    struct Row {
        std::string demo;
        RunMode mode = RunMode::AsFastAsPossible;
        std::vector<std::optional<TimingReport>> cells; // parallel to labels
    };

    std::vector<std::string> labels;
    std::vector<Row> rows;
    std::vector<std::string> warnings;

    const TimingReport* cell(std::string_view demo, RunMode mode, std::string_view label) const;
    bool infeasible(std::string_view demo, RunMode mode, std::string_view label) const;

    /// Total wall per cell, `*` marking real-time-infeasible cells.
    std::string to_text() const;
    /// label,total_wall,as_t,min,max,p95,overruns,infeasible. The label column
    /// is `demo|mode|label`.
    std::string to_csv() const;
    std::string to_json() const;
};

/// Throws std::invalid_argument with fewer than two reports. Reports in the
/// same row with different step counts are compared anyway, with a warning.
ComparisonTable compare_runs(const std::vector<LabeledReport>& reports);

/// Reads published totals: CSV with header `demo,mode,label,total_wall,steps,step_size`.
std::vector<LabeledReport> load_published_totals(const std::string& csv_text);

/// Reads a labelled report written by `write_labeled_report`.
LabeledReport read_labeled_report(const std::string& json_text);
std::string write_labeled_report(const LabeledReport& report);

} // namespace dcosim::metrics
