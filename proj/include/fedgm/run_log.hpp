#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedgm/param_vector.hpp"

namespace fedgm {

/// One global round. Loss and G_t = ||grad f(x_t)||^2 are measured at x_t,
/// before the round's update; h_norm is ||h_{t+1}||. Metrics are NaN on rounds
/// skipped by metrics_every, and lyapunov_residual is NaN when not audited.
struct RoundRecord {
    long round = 0;
    int stage = 1;
    std::vector<int> participants;
    double train_loss = 0.0;
    double grad_sq_norm = 0.0;
    double h_norm = 0.0;
    double lyapunov_residual = 0.0;
    std::uint64_t participants_hash = 0;
    long wall_events = 0;
    std::vector<int> k_used;      // per participant, same order
    std::vector<long> staleness;  // per participant, same order

    double mean_staleness() const;
    long max_staleness() const;
    double mean_k() const;
};

struct RunLog {
    std::vector<RoundRecord> records;
    bool async = false;
    bool audited = false;
    bool diverged = false;
    long divergence_round = -1;
    std::string divergence_message;
    double max_lyapunov_residual = 0.0;
    double max_scaled_residual = 0.0;  // residual / (1 + ||x_t||)
    double final_loss = 0.0;           // at x_T (NaN after divergence)
    double final_grad_sq = 0.0;
    ParamVector final_x;
    std::vector<ParamVector> trajectory;  // x_0..x_T when recorded
};

/// FNV-1a over the sorted participant ids.
std::uint64_t hash_participants(std::span<const int> ids);

/// Columns: round,stage,loss,grad_sq_norm,h_norm,lyapunov_residual,participants_hash
/// plus mean_staleness,max_staleness,mean_K for asynchronous runs. A divergence
/// is recorded as a trailing "# diverged ..." line.
void write_run_log_csv(const RunLog& log, std::ostream& os);

/// Reads back what write_run_log_csv wrote (participant lists are not stored).
RunLog read_run_log_csv(std::istream& is);

}  // namespace fedgm
