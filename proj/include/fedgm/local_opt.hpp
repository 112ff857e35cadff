#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedgm/problems.hpp"

namespace fedgm {

/// Local iterates with a norm above this abort the run.
inline constexpr double kDivergenceNorm = 1e8;

struct LocalConfig {
    double eta_l = 0.01;
    int steps = 1;  // K
    MinibatchSpec batch;

    void validate() const;
};

/// K = epochs * ceil(dataset_size / batch_size); full batch counts as one step per epoch.
int steps_for_epochs(int epochs, std::size_t dataset_size, std::size_t batch_size);

struct LocalDelta {
    int client_id = -1;
    ParamVector delta;
    int steps_taken = 0;
    long origin_round = 0;
    bool normalized = false;
};

/// K steps of minibatch SGD from x_start; returns x_start - x_K. `rng` is the
/// client's substream for this round and is the only source of randomness.
/// Throws DivergenceError when an iterate is non-finite or exceeds kDivergenceNorm.
LocalDelta local_sgd(const ClientObjective& client, const ParamVector& x_start, const LocalConfig& cfg, Rng& rng,
                     long origin_round = 0);

/// local_sgd followed by delta /= K.
LocalDelta local_sgd_normalized(const ClientObjective& client, const ParamVector& x_start, const LocalConfig& cfg,
                                Rng& rng, long origin_round = 0);

/// Substream used by a client's local training in a given round.
inline Rng local_stream(std::uint64_t seed, int client_id, long round) {
    return make_rng(seed, Stream::local, {static_cast<std::uint64_t>(client_id), static_cast<std::uint64_t>(round)});
}


/// Resolved local work for every client: a shared rate and batch, and a step
/// count per client (epochs translate into different K for different dataset sizes).
struct LocalPlan {
    LocalConfig base;
    std::vector<int> steps_per_client;  // empty: base.steps for everyone

    LocalConfig for_client(int client_id) const;
    int max_steps() const;

    static LocalPlan uniform(const LocalConfig& cfg) { return LocalPlan{cfg, {}}; }
    static LocalPlan from_epochs(double eta_l, int epochs, const MinibatchSpec& batch, const GlobalObjective& obj);
};

}  // namespace fedgm
