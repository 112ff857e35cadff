#include "fedgm/server_momentum.hpp"

#include <algorithm>
#include <cmath>

#include "fedgm/errors.hpp"

namespace fedgm {

void MomentumHyper::validate() const {
    if (!(eta > 0.0)) throw ConfigError("momentum", "eta must be positive");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("momentum", "beta must lie in [0, 1)");
    if (!(nu >= 0.0 && nu <= 1.0)) throw ConfigError("momentum", "nu must lie in [0, 1]");
}

Preset preset_from_string(const std::string& name) {
    if (name == "fedsgd" || name == "fedavg") return Preset::fedsgd;
    if (name == "fedavgm" || name == "fedshb") return Preset::fedavgm;
    if (name == "fednag") return Preset::fednag;
    if (name == "qhm" || name == "fedgm") return Preset::qhm;
    throw ConfigError("momentum", "unknown preset '" + name + "'");
}

std::string to_string(Preset p) {
    switch (p) {
        case Preset::fedsgd: return "fedsgd";
        case Preset::fedavgm: return "fedavgm";
        case Preset::fednag: return "fednag";
        case Preset::qhm: return "qhm";
    }
    return "unknown";
}

MomentumHyper preset(Preset name, double eta, double beta, double nu_opt) {
    MomentumHyper h{eta, beta, 0.0};
    switch (name) {
        case Preset::fedsgd: h.nu = 0.0; break;
        case Preset::fedavgm: h.nu = 1.0; break;
        case Preset::fednag: h.nu = beta; break;
        case Preset::qhm: h.nu = nu_opt; break;
    }
    h.validate();
    return h;
}

ServerState ServerState::initial(ParamVector x0) {
    ServerState s;
    s.d = ParamVector(x0.size());
    s.x = std::move(x0);
    return s;
}

StepResult server_step(const ServerState& state, const AggregateUpdate& agg, const MomentumHyper& hyper) {
    hyper.validate();
    require_same_dim(state.x, state.d, "server_step");
    require_same_dim(state.x, agg.delta, "server_step");
    const std::size_t n = state.x.size();
    StepResult out;
    out.state.round = state.round + 1;
    out.state.stage = state.stage;
    out.state.d = ParamVector(n);
    out.state.x = ParamVector(n);
    out.h = ParamVector(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dn = (1.0 - hyper.beta) * agg.delta[i] + hyper.beta * state.d[i];
        const double h = (1.0 - hyper.nu) * agg.delta[i] + hyper.nu * dn;
        out.state.d[i] = dn;
        out.h[i] = h;
        out.state.x[i] = state.x[i] - hyper.eta * h;
    }
    if (!all_finite(out.state.x) || !all_finite(out.state.d))
        throw DivergenceError("server update produced a non-finite model at round " + std::to_string(state.round),
                              state.round);
    return out;
}

CoefficientTable CoefficientTable::build(std::span<const double> betas, std::span<const double> nus) {
    if (betas.size() != nus.size()) throw ConfigError("momentum", "beta and nu histories differ in length");
    const std::size_t n = betas.size();
    CoefficientTable tab;
    tab.a.resize(n);
    tab.b.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        tab.a[t].assign(t + 1, 0.0);
        tab.b[t].assign(t + 1, 0.0);
        double tail = 1.0;  // prod_{q=p+1..t} beta_q
        for (std::size_t p = t + 1; p-- > 0;) {
            tab.a[t][p] = (1.0 - betas[p]) * tail;
            tab.b[t][p] = p == t ? 1.0 - betas[t] * nus[t] : nus[t] * (1.0 - betas[p]) * tail;
            tail *= betas[p];
        }
    }
    return tab;
}

BufferExpansion expand_buffers(std::span<const HistoryEntry> history) {
    if (history.empty()) throw ConfigError("momentum", "expand_buffers needs a non-empty history");
    const std::size_t t = history.size() - 1;
    const std::size_t dim = history.front().delta.size();
    BufferExpansion out{ParamVector(dim), ParamVector(dim)};
    double tail = 1.0;
    const double nu_t = history[t].nu;
    for (std::size_t p = t + 1; p-- > 0;) {
        const auto& e = history[p];
        require_same_dim(out.d, e.delta, "expand_buffers");
        const double a = (1.0 - e.beta) * tail;
        const double b = p == t ? 1.0 - e.beta * e.nu : nu_t * a;
        out.d.axpy(a, e.delta);
        out.y.axpy(b, e.delta);
        tail *= e.beta;
    }
    return out;
}

bool w1_equal(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

LyapunovAudit::LyapunovAudit(const ServerState& initial, const MomentumHyper& hyper)
    : z_(initial.x - hyper.w1() * initial.d) {}

double LyapunovAudit::step(const ServerState& before, const ServerState& after, const AggregateUpdate& agg,
                           const MomentumHyper& hyper_t, const MomentumHyper& hyper_next) {
    const double w_t = hyper_t.w1();
    const double w_next = hyper_next.w1();
    if (!w1_equal(w_t, w_next))
        throw AuditInapplicable("Lyapunov audit needs a constant eta*beta*nu/(1-beta); got " + std::to_string(w_t) +
                                " then " + std::to_string(w_next));
    const ParamVector z_before = before.x - w_t * before.d;
    ParamVector z_after = after.x - w_next * after.d;
    ParamVector r = z_after - z_before;
    r.axpy(hyper_t.eta, agg.delta);
    last_ = norm(r);
    max_residual_ = std::max(max_residual_, last_);
    max_scaled_ = std::max(max_scaled_, last_ / (1.0 + norm(before.x)));
    z_ = std::move(z_after);
    ++rounds_;
    return last_;
}

LyapunovAudit audit_step(LyapunovAudit audit, const ServerState& before, const ServerState& after,
                         const AggregateUpdate& agg, const MomentumHyper& hyper_t, const MomentumHyper& hyper_next) {
    audit.step(before, after, agg, hyper_t, hyper_next);
    return audit;
}

}  // namespace fedgm
