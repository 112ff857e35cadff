#pragma once

#include <cstdint>
#include <vector>

#include "fedgm/local_opt.hpp"
#include "fedgm/problems.hpp"
#include "fedgm/run_log.hpp"
#include "fedgm/schedule.hpp"

namespace fedgm {

struct ParticipationConfig {
    enum class Mode { full, partial };
    Mode mode = Mode::full;
    int m = 1;  // cohort size in partial mode
    std::uint64_t seed = 0;
};

/// Full mode: every client. Partial mode: m clients drawn uniformly without
/// replacement from (seed, round). Returned ids are ascending.
std::vector<int> sample_cohort(const ParticipationConfig& pcfg, int n, long round);

struct RunOptions {
    bool audit = false;
    /// Divide each client delta by its step count before averaging.
    bool normalize_deltas = false;
    /// Evaluate loss and G_t every this many rounds (round 0 always).
    int metrics_every = 1;
    /// Keep x_0..x_T in the log.
    bool record_trajectory = false;
    /// Seed of the per-client local training substreams.
    std::uint64_t seed = 0;
};

/// Unweighted mean of the deltas, reduced in ascending client id order.
AggregateUpdate aggregate_mean(std::vector<LocalDelta> deltas);

/// Synchronous multistage FedGM. Divergence ends the run early and is
/// recorded in the log rather than thrown.
RunLog run_sync(const GlobalObjective& obj, const StageSchedule& sched, const LocalPlan& plan,
                const ParticipationConfig& pcfg, const ParamVector& x0, const RunOptions& opts = {});

namespace detail {
/// Checks the schedule is runnable (and W1-constant when auditing).
void check_schedule(const StageSchedule& sched, bool audit);
void fill_metrics(const GlobalObjective& obj, const ParamVector& x, RoundRecord& rec);
}  // namespace detail

}  // namespace fedgm
