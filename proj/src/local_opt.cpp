#include "fedgm/local_opt.hpp"

#include <algorithm>

#include "fedgm/errors.hpp"

namespace fedgm {

void LocalConfig::validate() const {
    if (!(eta_l > 0.0)) throw ConfigError("local", "eta_l must be positive");
    if (steps < 1) throw ConfigError("local", "K must be at least 1");
}

int steps_for_epochs(int epochs, std::size_t dataset_size, std::size_t batch_size) {
    if (epochs < 1) throw ConfigError("local", "epochs must be at least 1");
    if (dataset_size == 0) throw ConfigError("local", "empty dataset");
    if (batch_size == 0 || batch_size >= dataset_size) return epochs;
    return epochs * static_cast<int>((dataset_size + batch_size - 1) / batch_size);
}

LocalDelta local_sgd(const ClientObjective& client, const ParamVector& x_start, const LocalConfig& cfg, Rng& rng,
                     long origin_round) {
    cfg.validate();
    require_same_dim(x_start, ParamVector(client.dim()), "local_sgd");
    ParamVector x = x_start;
    for (int k = 0; k < cfg.steps; ++k) {
        const ParamVector g = stochastic_grad(client, x, cfg.batch, rng);
        x.axpy(-cfg.eta_l, g);
        if (!all_finite(x) || norm(x) > kDivergenceNorm)
            throw DivergenceError("local iterate diverged on client " + std::to_string(client.id()) + " at round " +
                                      std::to_string(origin_round) + ", step " + std::to_string(k),
                                  origin_round, k, client.id());
    }
    LocalDelta out;
    out.client_id = client.id();
    out.delta = x_start - x;
    out.steps_taken = cfg.steps;
    out.origin_round = origin_round;
    return out;
}

LocalDelta local_sgd_normalized(const ClientObjective& client, const ParamVector& x_start, const LocalConfig& cfg,
                                Rng& rng, long origin_round) {
    LocalDelta out = local_sgd(client, x_start, cfg, rng, origin_round);
    out.delta /= static_cast<double>(out.steps_taken);
    out.normalized = true;
    return out;
}


LocalConfig LocalPlan::for_client(int client_id) const {
    LocalConfig cfg = base;
    if (!steps_per_client.empty()) cfg.steps = steps_per_client.at(static_cast<std::size_t>(client_id));
    return cfg;
}

int LocalPlan::max_steps() const {
    int k = base.steps;
    if (!steps_per_client.empty()) {
        k = 0;
        for (int s : steps_per_client) k = std::max(k, s);
    }
    return k;
}

LocalPlan LocalPlan::from_epochs(double eta_l, int epochs, const MinibatchSpec& batch, const GlobalObjective& obj) {
    LocalPlan plan;
    plan.base.eta_l = eta_l;
    plan.base.batch = batch;
    plan.base.steps = 1;
    for (const auto& c : obj.clients())
        plan.steps_per_client.push_back(steps_for_epochs(epochs, c.dataset_size(), batch.batch_size));
    return plan;
}

}  // namespace fedgm
