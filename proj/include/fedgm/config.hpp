#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgm/async_runner.hpp"
#include "fedgm/problems.hpp"
#include "fedgm/schedule.hpp"
#include "fedgm/server_momentum.hpp"

namespace fedgm {

struct ProblemConfig {
    SyntheticSpec synth;
    std::optional<std::uint64_t> seed;  // data seed; defaults to the run seed
};

struct PartitionSpec {
    enum class Mode { dirichlet, identical };
    Mode mode = Mode::dirichlet;
    double alpha = 0.5;
    std::size_t n_clients = 10;
    std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct ScheduleConfig {
    std::optional<Preset> method;  // applied to every stage when set
    std::vector<Stage> stages;
};

struct LocalSpec {
    double eta_l = 0.01;
    std::optional<int> epochs;
    std::optional<int> steps;
    std::size_t batch = 0;
};

struct RegimeSpec {
    enum class Mode { sync, async };
    Mode mode = Mode::sync;
    bool full = true;  // sync: full participation
    int m = 1;         // sync partial cohort or async buffer size
    StalenessModel staleness;
    std::optional<KModel> k_model;  // async; defaults to the local plan's K
    ArrivalModel arrival;
    double zipf = 0.0;  // skewed arrival with weights (i+1)^-zipf when no weights given
};

struct GridSpec {
    std::vector<double> eta, beta, nu;
    std::vector<std::uint64_t> seed;

    bool empty() const { return eta.empty() && beta.empty() && nu.empty() && seed.empty(); }
};

struct RunConfig {
    std::string name = "run";
    ProblemConfig problem;
    PartitionSpec partition;
    ScheduleConfig schedule;
    LocalSpec local;
    RegimeSpec regime;
    bool audit = false;
    bool normalize_deltas = false;
    int metrics_every = 1;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;  // multi-seed sweep; empty means {seed}
    int heterogeneity_draws = 32;
    std::string output = "out";
    GridSpec grid;

    std::uint64_t data_seed() const { return problem.seed.value_or(seed); }
    std::uint64_t partition_seed() const { return partition.seed.value_or(seed); }
    StageSchedule stage_schedule() const { return StageSchedule{schedule.stages}; }
    bool operator==(const RunConfig& o) const;
};

/// Parses and validates. Schedules may be given as explicit `stages`, or as
/// `etas` / `nus` / `beta1` with `rounds` per stage or `total_rounds`
/// (betas from solve_betas, lengths from stage_lengths). Throws ConfigError
/// naming the failing validator.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// Resolved form: explicit stages, every field present.
nlohmann::json to_json(const RunConfig& cfg);

/// Runs every nested validator; throws ConfigError on the first failure.
void validate_config(const RunConfig& cfg);

/// Cartesian product of the grid (eta x beta x nu x seed) applied to the
/// single-stage schedule; an empty grid yields {cfg}. Members get distinct
/// names and output directories and no grid.
std::vector<RunConfig> expand_grid(const RunConfig& cfg);

}  // namespace fedgm
