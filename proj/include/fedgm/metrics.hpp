#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fedgm/problems.hpp"
#include "fedgm/run_log.hpp"
#include "fedgm/schedule.hpp"

namespace fedgm {

struct StageSummary {
    int stage = 1;
    double G_bar_s = 0.0;   // mean of logged G_t over the stage
    double mean_loss = 0.0;
    long rounds = 0;        // logged rounds that entered the mean
};

struct StageAverages {
    std::vector<StageSummary> stages;
    double G_bar = 0.0;    // unweighted mean of the stage means
    bool partial = false;  // log stops before the schedule ends
};

/// Per-stage means of the finite G_t and loss values in the log. Stages with
/// no logged rounds are omitted. Throws ConfigError on an empty log.
StageAverages stage_averages(const RunLog& log, const StageSchedule& sched);

struct HeterogeneityReport {
    double sigma_g_sq_hat = 0.0;
    double sigma_l_sq_hat = 0.0;
    double L_hat = 0.0;
};

/// sigma_g^2: (1/n) sum_i ||grad f_i(x) - grad f(x)||^2.
/// sigma_l^2: client average of the mean squared deviation of `draws`
/// minibatch gradients from the client's full gradient.
/// L: estimate_lipschitz at x.
HeterogeneityReport estimate_heterogeneity(const GlobalObjective& obj, const ParamVector& x,
                                           const MinibatchSpec& batch, int draws, std::uint64_t seed);

/// Header stage,G_bar_s,mean_loss,rounds followed by one row per stage.
void write_stage_summary_csv(const StageAverages& avg, std::ostream& os);

}  // namespace fedgm
