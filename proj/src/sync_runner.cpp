#include "fedgm/sync_runner.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "fedgm/errors.hpp"

namespace fedgm {

std::vector<int> sample_cohort(const ParticipationConfig& pcfg, int n, long round) {
    if (n < 1) throw ConfigError("participation", "need at least one client");
    std::vector<int> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    if (pcfg.mode == ParticipationConfig::Mode::full) return ids;
    if (pcfg.m < 1 || pcfg.m > n)
        throw ConfigError("participation", "cohort size m=" + std::to_string(pcfg.m) + " must lie in [1, n=" +
                                               std::to_string(n) + "]");
    // partial Fisher-Yates: the first m slots form a uniform m-subset
    Rng rng = make_rng(pcfg.seed, Stream::cohort, {static_cast<std::uint64_t>(round)});
    for (int i = 0; i < pcfg.m; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
    }
    ids.resize(static_cast<std::size_t>(pcfg.m));
    std::sort(ids.begin(), ids.end());
    return ids;
}

AggregateUpdate aggregate_mean(std::vector<LocalDelta> deltas) {
    if (deltas.empty()) throw ConfigError("aggregate", "no client updates to aggregate");
    std::stable_sort(deltas.begin(), deltas.end(),
                     [](const LocalDelta& a, const LocalDelta& b) { return a.client_id < b.client_id; });
    AggregateUpdate agg;
    agg.delta = ParamVector(deltas.front().delta.size());
    for (const auto& d : deltas) {
        agg.delta += d.delta;
        agg.contributing_clients.push_back(d.client_id);
    }
    agg.delta /= static_cast<double>(deltas.size());
    return agg;
}

namespace detail {

void check_schedule(const StageSchedule& sched, bool audit) {
    const ValidationReport rep = validate(sched);
    if (!rep.runnable()) {
        for (const auto& v : rep.violations)
            if (!v.rounding_only && v.constraint != "W1 constant")
                throw ConfigError("schedule", v.constraint + " violated at stage " + std::to_string(v.stage) + ": " +
                                                  v.detail);
    }
    if (audit && rep.has("W1 constant"))
        throw AuditInapplicable("Lyapunov audit requested on a schedule whose W1 is not constant");
}

void fill_metrics(const GlobalObjective& obj, const ParamVector& x, RoundRecord& rec) {
    rec.train_loss = eval_loss(obj, x);
    rec.grad_sq_norm = squared_norm(eval_grad(obj, x));
}

}  // namespace detail

RunLog run_sync(const GlobalObjective& obj, const StageSchedule& sched, const LocalPlan& plan,
                const ParticipationConfig& pcfg, const ParamVector& x0, const RunOptions& opts) {
    detail::check_schedule(sched, opts.audit);
    require_same_dim(x0, ParamVector(obj.dim()), "run_sync");
    if (opts.metrics_every < 1) throw ConfigError("run", "metrics_every must be >= 1");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const int n = static_cast<int>(obj.num_clients());
    const long total = sched.total_rounds();

    RunLog log;
    log.audited = opts.audit;
    ServerState state = ServerState::initial(x0);
    LyapunovAudit audit(state, sched.hyper_at(0));
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
            rec.participants = sample_cohort(pcfg, n, t);
            std::vector<LocalDelta> deltas;
            deltas.reserve(rec.participants.size());
            for (int i : rec.participants) {
                Rng rng = local_stream(opts.seed, i, t);
                const LocalConfig cfg = plan.for_client(i);
                deltas.push_back(opts.normalize_deltas ? local_sgd_normalized(obj.client(i), state.x, cfg, rng, t)
                                                       : local_sgd(obj.client(i), state.x, cfg, rng, t));
                rec.k_used.push_back(cfg.steps);
                rec.staleness.push_back(0);
            }
            const AggregateUpdate agg = aggregate_mean(std::move(deltas));
            StepResult step = server_step(state, agg, hyper);
            if (norm(step.state.x) > kDivergenceNorm)
                throw DivergenceError("global model norm exceeded the divergence threshold at round " +
                                          std::to_string(t),
                                      t);
            step.state.stage = rec.stage;
            if (opts.audit) rec.lyapunov_residual = audit.step(state, step.state, agg, hyper, sched.hyper_at(t + 1));
            rec.h_norm = norm(step.h);
            rec.participants_hash = hash_participants(rec.participants);
            rec.wall_events = static_cast<long>(rec.participants.size());
            state = std::move(step.state);
            if (opts.record_trajectory) log.trajectory.push_back(state.x);
        } catch (const DivergenceError& e) {
            log.diverged = true;
            log.divergence_round = t;
            log.divergence_message = e.what();
            rec.h_norm = nan;
            rec.participants_hash = hash_participants(rec.participants);
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

}  // namespace fedgm
