#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedgm/param_vector.hpp"

namespace fedgm {

/// Server learning rate eta, momentum factor beta, instant discount factor nu.
struct MomentumHyper {
    double eta = 1.0;
    double beta = 0.0;
    double nu = 0.0;

    void validate() const;
    /// eta * beta * nu / (1 - beta), the coefficient of d in the auxiliary sequence.
    double w1() const { return eta * beta * nu / (1.0 - beta); }
};

enum class Preset { fedsgd, fedavgm, fednag, qhm };

Preset preset_from_string(const std::string& name);
std::string to_string(Preset p);

/// fedsgd: nu = 0; fedavgm: nu = 1; fednag: nu = beta; qhm: nu = nu_opt.
MomentumHyper preset(Preset name, double eta, double beta, double nu_opt = 0.0);

struct ServerState {
    ParamVector x;  // global model x_t
    ParamVector d;  // momentum buffer d_t
    long round = 0;
    int stage = 1;

    static ServerState initial(ParamVector x0);
};

struct AggregateUpdate {
    ParamVector delta;
    std::vector<int> contributing_clients;
};

struct StepResult {
    ServerState state;
    ParamVector h;  // blended direction h_{t+1}, for logging only
};

/// d' = (1-beta) delta + beta d;  h = (1-nu) delta + nu d';  x' = x - eta h.
/// Throws DivergenceError when the result is not finite.
StepResult server_step(const ServerState& state, const AggregateUpdate& agg, const MomentumHyper& hyper);

/// Triangular tables of the buffer expansions
///   d_{t+1} = sum_p a[t][p] delta_p,  a[t][p] = (1-beta_p) prod_{q=p+1..t} beta_q
///   h_{t+1} = sum_p b[t][p] delta_p,  b[t][t] = 1 - beta_t nu_t,
///                                     b[t][p] = nu_t (1-beta_p) prod_{q=p+1..t} beta_q  (p < t)
struct CoefficientTable {
    std::vector<std::vector<double>> a;
    std::vector<std::vector<double>> b;

    static CoefficientTable build(std::span<const double> betas, std::span<const double> nus);
};

struct HistoryEntry {
    ParamVector delta;
    double beta = 0.0;
    double nu = 0.0;
};

struct BufferExpansion {
    ParamVector d;  // reconstructed d_{t+1}
    ParamVector y;  // reconstructed h_{t+1} = (x_t - x_{t+1}) / eta_t
};

/// Rebuilds the latest buffers from the full history of aggregates (t = size-1).
BufferExpansion expand_buffers(std::span<const HistoryEntry> history);

/// Tracks z_t = x_t - w1_t d_t and the residual ||(z_{t+1} - z_t) + eta_t delta_t||.
class LyapunovAudit {
public:
    LyapunovAudit() = default;
    LyapunovAudit(const ServerState& initial, const MomentumHyper& hyper);

    /// Throws AuditInapplicable unless w1(hyper_t) == w1(hyper_next) to 1e-9 relative.
    /// Returns the round's residual.
    double step(const ServerState& before, const ServerState& after, const AggregateUpdate& agg,
                const MomentumHyper& hyper_t, const MomentumHyper& hyper_next);

    const ParamVector& z() const { return z_; }
    double max_residual() const { return max_residual_; }
    /// max over rounds of residual / (1 + ||x_t||)
    double max_scaled_residual() const { return max_scaled_; }
    double last_residual() const { return last_; }
    long rounds() const { return rounds_; }

private:
    ParamVector z_;
    double max_residual_ = 0.0;
    double max_scaled_ = 0.0;
    double last_ = 0.0;
    long rounds_ = 0;
};

/// Functional form of LyapunovAudit::step.
LyapunovAudit audit_step(LyapunovAudit audit, const ServerState& before, const ServerState& after,
                         const AggregateUpdate& agg, const MomentumHyper& hyper_t, const MomentumHyper& hyper_next);

bool w1_equal(double a, double b);

}  // namespace fedgm
