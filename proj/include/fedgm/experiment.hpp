#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgm/config.hpp"
#include "fedgm/metrics.hpp"
#include "fedgm/run_log.hpp"
#include "fedgm/sync_runner.hpp"

namespace fedgm {

/// Data pool, partition and objective built from a config.
struct BuiltProblem {
    GlobalObjective objective;
    ParamVector x0;
    LocalPlan plan;
};

BuiltProblem build_problem(const RunConfig& cfg);

/// Async settings resolved against the local plan (K model defaults to the
/// per-client K of the plan).
AsyncConfig resolve_async(const RunConfig& cfg, const LocalPlan& plan);

struct RunResult {
    RunLog log;
    StageAverages averages;
    HeterogeneityReport heterogeneity_x0;
    HeterogeneityReport heterogeneity_final;
    nlohmann::json manifest;
};

/// Builds the problem, runs the configured regime and assembles the manifest.
RunResult execute(const RunConfig& cfg);

/// Writes run_log.csv, stage_summary.csv, heterogeneity.json and manifest.json
/// into `dir` (created if needed).
void write_artifacts(const RunResult& result, const std::filesystem::path& dir);

struct ComparisonRow {
    std::string label;
    int runs = 0;
    int diverged = 0;
    double final_loss_mean = 0.0;
    double final_loss_se = 0.0;  // sample std / sqrt(runs); NaN for one run
    double final_G_mean = 0.0;
    double final_G_se = 0.0;
    double rounds_to_threshold_mean = 0.0;  // NaN when no run reached it
    double final_loss_diff = 0.0;           // relative to the first row
    double final_G_diff = 0.0;
};

/// Loads each manifest (and the run log beside it), groups runs by name with any
/// trailing "_seed<N>" removed, and aggregates. Throws ComparisonError for fewer
/// than two runs or runs on different problems.
std::vector<ComparisonRow> compare(const std::vector<std::filesystem::path>& manifests, double g_threshold);

void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& os);

/// Mean and sample standard error of the finite entries.
std::pair<double, double> mean_and_se(const std::vector<double>& values);

}  // namespace fedgm
