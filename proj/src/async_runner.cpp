#include "fedgm/async_runner.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <queue>
#include <random>

#include "fedgm/errors.hpp"

namespace fedgm {

void AsyncConfig::validate(int n) const {
    if (m < 1 || m > n)
        throw ConfigError("async", "buffer size m=" + std::to_string(m) + " must lie in [1, n=" + std::to_string(n) + "]");
    if (staleness.kind == StalenessModel::Kind::uniform_recent && staleness.value < 1)
        throw ConfigError("async", "uniform_recent window must be >= 1");
    if (staleness.kind == StalenessModel::Kind::fixed && staleness.value < 0)
        throw ConfigError("async", "fixed staleness must be >= 0");
    if (tau_max >= 0 && staleness.max_delay() > tau_max)
        throw ConfigError("async", "staleness model can exceed tau_max");
    if (k_model.kind == KModel::Kind::fixed && k_model.lo < 1) throw ConfigError("async", "fixed K must be >= 1");
    if (k_model.kind == KModel::Kind::uniform_range && (k_model.lo < 1 || k_model.hi < k_model.lo))
        throw ConfigError("async", "K range must satisfy 1 <= lo <= hi");
    if (k_model.kind == KModel::Kind::per_client) {
        if (k_model.per_client.size() != static_cast<std::size_t>(n))
            throw ConfigError("async", "per-client K needs one entry per client");
        for (int k : k_model.per_client)
            if (k < 1) throw ConfigError("async", "per-client K must be >= 1");
    }
    if (arrival.kind == ArrivalModel::Kind::skewed) {
        if (arrival.weights.size() != static_cast<std::size_t>(n))
            throw ConfigError("async", "skewed arrival needs one weight per client");
        int positive = 0;
        for (double w : arrival.weights) {
            if (!(w >= 0.0)) throw ConfigError("async", "arrival weights must be non-negative");
            positive += w > 0.0;
        }
        if (positive < m) throw ConfigError("async", "fewer clients with positive weight than m");
    }
}

int KModel::max_k() const {
    switch (kind) {
        case Kind::fixed: return lo;
        case Kind::uniform_range: return hi;
        case Kind::per_client: return per_client.empty() ? 1 : *std::max_element(per_client.begin(), per_client.end());
    }
    return lo;
}

std::vector<int> draw_arrivals(const ArrivalModel& model, int n, int m, Rng& rng) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(m));
    if (model.kind == ArrivalModel::Kind::uniform) {
        std::vector<int> ids(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < m; ++i) {
            std::uniform_int_distribution<int> pick(i, n - 1);
            std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
            out.push_back(ids[static_cast<std::size_t>(i)]);
        }
        return out;
    }
    std::vector<double> w = model.weights;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < m; ++k) {
        double total = 0.0;
        for (double v : w) total += v;
        double r = u(rng) * total;
        int chosen = -1;
        for (int i = 0; i < n; ++i) {
            if (w[static_cast<std::size_t>(i)] <= 0.0) continue;
            chosen = i;
            r -= w[static_cast<std::size_t>(i)];
            if (r < 0.0) break;
        }
        out.push_back(chosen);
        w[static_cast<std::size_t>(chosen)] = 0.0;
    }
    return out;
}

namespace {

struct LaterFirst {
    bool operator()(const PendingUpdate& a, const PendingUpdate& b) const {
        if (a.arrival_round != b.arrival_round) return a.arrival_round > b.arrival_round;
        if (a.event_index != b.event_index) return a.event_index > b.event_index;
        return a.client_id > b.client_id;
    }
};

int draw_delay(const StalenessModel& model, Rng& rng) {
    if (model.kind == StalenessModel::Kind::fixed) return model.value;
    std::uniform_int_distribution<int> pick(0, model.value - 1);
    return pick(rng);
}

int draw_k(const KModel& model, int client, Rng& rng) {
    if (model.kind == KModel::Kind::fixed) return model.lo;
    if (model.kind == KModel::Kind::per_client) return model.per_client[static_cast<std::size_t>(client)];
    std::uniform_int_distribution<int> pick(model.lo, model.hi);
    return pick(rng);
}

}  // namespace

RunLog run_async(const GlobalObjective& obj, const StageSchedule& sched, const LocalConfig& lcfg,
                 const AsyncConfig& acfg, const ParamVector& x0, const RunOptions& opts) {
    detail::check_schedule(sched, opts.audit);
    const int n = static_cast<int>(obj.num_clients());
    acfg.validate(n);
    require_same_dim(x0, ParamVector(obj.dim()), "run_async");
    if (opts.metrics_every < 1) throw ConfigError("run", "metrics_every must be >= 1");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const long total = sched.total_rounds();
    const int bound = acfg.delay_bound();

    RunLog log;
    log.async = true;
    log.audited = opts.audit;
    ServerState state = ServerState::initial(x0);
    LyapunovAudit audit(state, sched.hyper_at(0));
    std::deque<ParamVector> history{state.x};  // history.back() is x_t
    std::priority_queue<PendingUpdate, std::vector<PendingUpdate>, LaterFirst> queue;
    long event_index = 0;
    if (opts.record_trajectory) log.trajectory.push_back(state.x);

    for (long t = 0; t < total; ++t) {
        RoundRecord rec;
        rec.round = t;
        rec.stage = sched.stage_of_round(t);
        state.stage = rec.stage;
        const MomentumHyper hyper = sched.hyper_at(t);
        if (t % opts.metrics_every == 0) {
            detail::fill_metrics(obj, state.x, rec);
        } else {
            rec.train_loss = rec.grad_sq_norm = nan;
        }
        rec.lyapunov_residual = nan;
        try {
            Rng arrival_rng = make_rng(acfg.seed, Stream::cohort, {static_cast<std::uint64_t>(t)});
            for (int client : draw_arrivals(acfg.arrival, n, acfg.m, arrival_rng)) {
                const auto key = {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(client)};
                Rng delay_rng = make_rng(acfg.seed, Stream::staleness, key);
                Rng k_rng = make_rng(acfg.seed, Stream::k_choice, key);
                const long tau = std::min<long>(draw_delay(acfg.staleness, delay_rng), t);
                LocalConfig cfg = lcfg;
                cfg.steps = draw_k(acfg.k_model, client, k_rng);
                const ParamVector& pulled = history[history.size() - 1 - static_cast<std::size_t>(tau)];
                Rng local_rng = local_stream(opts.seed, client, t);
                LocalDelta d = local_sgd_normalized(obj.client(client), pulled, cfg, local_rng, t - tau);
                queue.push(PendingUpdate{client, std::move(d.delta), t - tau, t, cfg.steps, event_index++});
            }

            std::vector<LocalDelta> batch;
            for (int k = 0; k < acfg.m; ++k) {
                PendingUpdate u = queue.top();
                queue.pop();
                const long tau = u.arrival_round - u.origin_round;
                if (u.arrival_round > t || tau < 0 || tau > bound)
                    throw std::logic_error("buffer invariant broken: staleness " + std::to_string(tau));
                rec.participants.push_back(u.client_id);
                rec.k_used.push_back(u.k_used);
                rec.staleness.push_back(tau);
                batch.push_back(LocalDelta{u.client_id, std::move(u.delta), u.k_used, u.origin_round, true});
            }
            const AggregateUpdate agg = aggregate_mean(std::move(batch));
            StepResult step = server_step(state, agg, hyper);
            if (norm(step.state.x) > kDivergenceNorm)
                throw DivergenceError("global model norm exceeded the divergence threshold at round " +
                                          std::to_string(t),
                                      t);
            step.state.stage = rec.stage;
            if (opts.audit) rec.lyapunov_residual = audit.step(state, step.state, agg, hyper, sched.hyper_at(t + 1));
            rec.h_norm = norm(step.h);
            rec.participants_hash = hash_participants(rec.participants);
            rec.wall_events = acfg.m;
            state = std::move(step.state);
            history.push_back(state.x);
            while (history.size() > static_cast<std::size_t>(bound) + 1) history.pop_front();
            if (opts.record_trajectory) log.trajectory.push_back(state.x);
        } catch (const DivergenceError& e) {
            log.diverged = true;
            log.divergence_round = t;
            log.divergence_message = e.what();
            rec.h_norm = nan;
            log.records.push_back(std::move(rec));
            break;
        }
        log.records.push_back(std::move(rec));
    }

    log.max_lyapunov_residual = audit.max_residual();
    log.max_scaled_residual = audit.max_scaled_residual();
    log.final_x = state.x;
    if (log.diverged) {
        log.final_loss = log.final_grad_sq = nan;
    } else {
        log.final_loss = eval_loss(obj, state.x);
        log.final_grad_sq = squared_norm(eval_grad(obj, state.x));
    }
    return log;
}

StalenessStats staleness_stats(const RunLog& log) {
    StalenessStats s;
    long rounds = 0;
    for (const auto& r : log.records) {
        if (r.k_used.empty()) continue;
        double kbar = 0.0, k2 = 0.0, kinv = 0.0;
        for (int k : r.k_used) {
            kbar += k;
            k2 += static_cast<double>(k) * k;
            kinv += 1.0 / k;
        }
        const double m = static_cast<double>(r.k_used.size());
        s.phi1 += kbar / m;
        s.phi2 += k2 / m;
        s.phi3 += kinv / m;
        for (long tau : r.staleness) ++s.tau_hist[tau];
        ++rounds;
    }
    if (rounds == 0) throw ConfigError("staleness", "log has no rounds with local-step records");
    s.phi1 /= static_cast<double>(rounds);
    s.phi2 /= static_cast<double>(rounds);
    s.phi3 /= static_cast<double>(rounds);
    return s;
}

}  // namespace fedgm
