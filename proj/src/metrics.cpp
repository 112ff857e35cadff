#include "fedgm/metrics.hpp"

#include <cmath>
#include <limits>
#include <iomanip>
#include <ostream>

#include "fedgm/errors.hpp"

namespace fedgm {

StageAverages stage_averages(const RunLog& log, const StageSchedule& sched) {
    if (log.records.empty()) throw ConfigError("metrics", "run log is empty");
    const std::size_t S = sched.stages.size();
    std::vector<double> g_sum(S, 0.0), loss_sum(S, 0.0);
    std::vector<long> count(S, 0), loss_count(S, 0);
    for (const auto& r : log.records) {
        const auto s = static_cast<std::size_t>(sched.stage_of_round(r.round) - 1);
        if (std::isfinite(r.grad_sq_norm)) {
            g_sum[s] += r.grad_sq_norm;
            ++count[s];
        }
        if (std::isfinite(r.train_loss)) {
            loss_sum[s] += r.train_loss;
            ++loss_count[s];
        }
    }
    StageAverages out;
    out.partial = log.diverged || static_cast<long>(log.records.size()) < sched.total_rounds();
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        if (count[s] == 0) continue;
        StageSummary sum;
        sum.stage = static_cast<int>(s) + 1;
        sum.rounds = count[s];
        sum.G_bar_s = g_sum[s] / static_cast<double>(count[s]);
        sum.mean_loss = loss_count[s] ? loss_sum[s] / static_cast<double>(loss_count[s])
                                      : std::numeric_limits<double>::quiet_NaN();
        total += sum.G_bar_s;
        out.stages.push_back(sum);
    }
    if (out.stages.empty()) throw ConfigError("metrics", "run log has no finite gradient records");
    out.G_bar = total / static_cast<double>(out.stages.size());
    return out;
}

HeterogeneityReport estimate_heterogeneity(const GlobalObjective& obj, const ParamVector& x,
                                           const MinibatchSpec& batch, int draws, std::uint64_t seed) {
    HeterogeneityReport rep;
    const std::size_t n = obj.num_clients();
    std::vector<ParamVector> grads;
    grads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) grads.push_back(obj.client(i).grad(x));
    const ParamVector g = eval_grad(obj, x);
    double sg = 0.0, sl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sg += squared_norm(grads[i] - g);
        const auto& client = obj.client(i);
        const bool full = batch.batch_size == 0 || batch.batch_size >= client.dataset_size();
        if (full || draws < 1) continue;
        Rng rng = make_rng(seed, Stream::probe, {static_cast<std::uint64_t>(i)});
        double v = 0.0;
        for (int k = 0; k < draws; ++k) v += squared_norm(stochastic_grad(client, x, batch, rng) - grads[i]);
        sl += v / draws;
    }
    rep.sigma_g_sq_hat = sg / static_cast<double>(n);
    rep.sigma_l_sq_hat = sl / static_cast<double>(n);
    rep.L_hat = estimate_lipschitz(obj, x, seed);
    return rep;
}

void write_stage_summary_csv(const StageAverages& avg, std::ostream& os) {
    os << std::setprecision(17) << "stage,G_bar_s,mean_loss,rounds\n";
    for (const auto& s : avg.stages) os << s.stage << ',' << s.G_bar_s << ',' << s.mean_loss << ',' << s.rounds << '\n';
}

}  // namespace fedgm
