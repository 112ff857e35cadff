#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fedgm/sync_runner.hpp"

namespace fedgm {

/// How old the model a client trains on is, in global rounds.
struct StalenessModel {
    enum class Kind { uniform_recent, fixed };
    Kind kind = Kind::fixed;
    int value = 0;  // window w for uniform_recent (tau in {0..w-1}), tau for fixed

    int max_delay() const { return kind == Kind::uniform_recent ? value - 1 : value; }
};

/// Local step count K_{t,i} chosen by each client.
struct KModel {
    enum class Kind { fixed, uniform_range, per_client };
    Kind kind = Kind::fixed;
    int lo = 1;
    int hi = 1;
    std::vector<int> per_client;  // per_client: client i always runs per_client[i] steps

    int max_k() const;
};

/// Which clients' updates fill the buffer. Uniform: m distinct clients drawn
/// uniformly. Skewed: drawn without replacement with probability proportional to
/// `weights`, renormalised after each draw.
struct ArrivalModel {
    enum class Kind { uniform, skewed };
    Kind kind = Kind::uniform;
    std::vector<double> weights;
};

struct AsyncConfig {
    int m = 1;         // updates per aggregation
    int tau_max = -1;  // -1: take the staleness model's bound
    StalenessModel staleness;
    KModel k_model;
    ArrivalModel arrival;
    std::uint64_t seed = 0;

    int delay_bound() const { return tau_max < 0 ? staleness.max_delay() : tau_max; }
    void validate(int n) const;
};

/// A finished local computation waiting in the server buffer.
struct PendingUpdate {
    int client_id = -1;
    ParamVector delta;  // normalised
    long origin_round = 0;
    long arrival_round = 0;
    int k_used = 0;
    long event_index = 0;
};

/// Autonomous multistage FedGM as a deterministic discrete-event simulation.
///
/// Each global round t is one dispatch slot. The arrival model picks the m
/// clients whose work completes in slot t; each of them pulled the model of
/// round t - tau (tau from the staleness model, capped at t since no older
/// model exists), trained for K steps chosen by the K model, and enqueues its
/// normalised delta. The server pops exactly m updates from the queue in
/// (arrival round, event index, client id) order, averages them in client id
/// order and applies the stage's FedGM step. With fixed(0) staleness, fixed K
/// and m = n this reproduces run_sync with normalised deltas bit for bit.
RunLog run_async(const GlobalObjective& obj, const StageSchedule& sched, const LocalConfig& lcfg,
                 const AsyncConfig& acfg, const ParamVector& x0, const RunOptions& opts = {});

/// Draws m distinct clients per the arrival model (unsorted, in draw order).
std::vector<int> draw_arrivals(const ArrivalModel& model, int n, int m, Rng& rng);

struct StalenessStats {
    double phi1 = 0.0;  // mean over rounds of mean_i K_{t,i}
    double phi2 = 0.0;  // mean over rounds of mean_i K_{t,i}^2
    double phi3 = 0.0;  // mean over rounds of mean_i 1/K_{t,i}
    std::map<long, long> tau_hist;
};

/// Throws ConfigError on a log without per-round K records.
StalenessStats staleness_stats(const RunLog& log);

}  // namespace fedgm
