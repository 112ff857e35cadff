#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fedgm/errors.hpp"
#include "fedgm/sync_runner.hpp"
#include "support.hpp"

using namespace fedgm;
using fedgm::testing::point_quadratics;
using fedgm::testing::random_quadratic;

namespace {

std::string csv_of(const RunLog& log) {
    std::ostringstream os;
    write_run_log_csv(log, os);
    return os.str();
}

ParticipationConfig partial(int m, std::uint64_t seed = 1) {
    return ParticipationConfig{ParticipationConfig::Mode::partial, m, seed};
}

}  // namespace

TEST_CASE("cohort sampling") {
    const ParticipationConfig full{ParticipationConfig::Mode::full, 1, 0};
    CHECK(sample_cohort(full, 4, 0) == std::vector<int>{0, 1, 2, 3});
    CHECK(sample_cohort(partial(4), 4, 7) == std::vector<int>{0, 1, 2, 3});
    CHECK_THROWS_AS(sample_cohort(partial(5), 4, 0), ConfigError);
    CHECK_THROWS_AS(sample_cohort(partial(0), 4, 0), ConfigError);
    for (long t = 0; t < 50; ++t) {
        const auto c = sample_cohort(partial(5), 100, t);
        CHECK(c.size() == 5);
        CHECK(std::is_sorted(c.begin(), c.end()));
        CHECK(std::set<int>(c.begin(), c.end()).size() == 5);
        CHECK(c == sample_cohort(partial(5), 100, t));
    }
    CHECK(sample_cohort(partial(5, 1), 100, 3) != sample_cohort(partial(5, 2), 100, 3));
}

TEST_CASE("cohort inclusion frequencies") {
    const int n = 20, m = 4, rounds = 20000;
    std::vector<int> single(n, 0);
    std::vector<int> pair(n * n, 0);
    for (long t = 0; t < rounds; ++t) {
        const auto c = sample_cohort(partial(m, 9), n, t);
        for (std::size_t a = 0; a < c.size(); ++a) {
            ++single[static_cast<std::size_t>(c[a])];
            for (std::size_t b = a + 1; b < c.size(); ++b) ++pair[static_cast<std::size_t>(c[a] * n + c[b])];
        }
    }
    const double p1 = double(m) / n, p2 = double(m) * (m - 1) / (double(n) * (n - 1));
    for (int i = 0; i < n; ++i)
        CHECK(std::abs(single[static_cast<std::size_t>(i)] / double(rounds) - p1) <= 3.0 * std::sqrt(p1 * (1 - p1) / rounds));
    int within = 0, total = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++total)
            within += std::abs(pair[static_cast<std::size_t>(i * n + j)] / double(rounds) - p2) <=
                      3.0 * std::sqrt(p2 * (1 - p2) / rounds);
    CHECK(within >= 0.99 * total);
}

TEST_CASE("aggregation is the mean in client id order") {
    std::vector<LocalDelta> ds;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (int i = 0; i < 7; ++i) ds.push_back(LocalDelta{i, ParamVector{g(rng), g(rng), g(rng)}, 1, 0, false});
    const AggregateUpdate a = aggregate_mean(ds);
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(ds.begin(), ds.end(), rng);
        const AggregateUpdate b = aggregate_mean(ds);
        CHECK(b.delta == a.delta);
        CHECK(b.contributing_clients == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    }
    ParamVector manual(3);
    std::sort(ds.begin(), ds.end(), [](auto& x, auto& y) { return x.client_id < y.client_id; });
    for (const auto& d : ds) manual += d.delta;
    manual /= 7.0;
    CHECK(a.delta == manual);
    CHECK_THROWS_AS(aggregate_mean({}), ConfigError);
}

TEST_CASE("one client, one full-batch step and FedSGD with eta = 1 is centralised SGD") {
    const GlobalObjective obj = random_quadratic(1, 4, 2);
    const ParamVector x0{1.0, -1.0, 0.5, 2.0};
    const RunLog log = run_sync(obj, StageSchedule::single(preset(Preset::fedsgd, 1.0, 0.9), 50),
                                LocalPlan::uniform({0.1, 1, {}}), {}, x0, RunOptions{.record_trajectory = true});
    ParamVector x = x0;
    for (int t = 0; t < 50; ++t) {
        x.axpy(-0.1, obj.client(0).grad(x));
        CHECK(fedgm::testing::max_abs_diff(log.trajectory[static_cast<std::size_t>(t + 1)], x) <= 1e-13);
    }
}

TEST_CASE("runs are deterministic") {
    const GlobalObjective obj = random_quadratic(10, 5, 3);
    const StageSchedule sched = StageSchedule::single({1.0, 0.9, 0.9}, 60);
    const LocalPlan plan = LocalPlan::uniform({0.05, 3, MinibatchSpec{4}});
    const RunLog a = run_sync(obj, sched, plan, partial(3), ParamVector(5), {.seed = 4});
    const RunLog b = run_sync(obj, sched, plan, partial(3), ParamVector(5), {.seed = 4});
    CHECK(csv_of(a) == csv_of(b));
    CHECK(a.final_x == b.final_x);
    const RunLog c = run_sync(obj, sched, plan, partial(3), ParamVector(5), {.seed = 5});
    CHECK(c.final_x != a.final_x);
}

TEST_CASE("full participation converges on a heterogeneous quadratic") {
    // distinct centres, common curvature: the K-step fixed point is x*
    const GlobalObjective obj = random_quadratic(20, 10, 4, 20, true);
    const double L = *obj.exact_lipschitz();
    const int K = 5;
    TheoremInputs in{L, K, 20, 20, 0, Regime::full, 0.0};
    const StageSchedule sched = StageSchedule::single(preset(Preset::fedsgd, 1.0, 0.0), 500);
    in.eta_l = 0.9 * check_theorem_conditions(sched, in).max_eta_l;
    const RunLog log = run_sync(obj, sched, LocalPlan::uniform({in.eta_l, K, {}}), {}, ParamVector(10));
    CHECK_FALSE(log.diverged);
    CHECK(log.final_grad_sq <= 1e-6);
    CHECK(log.records.front().grad_sq_norm > log.final_grad_sq);
}

TEST_CASE("distinct client curvatures leave a client-drift floor for K > 1") {
    const GlobalObjective obj = random_quadratic(20, 10, 4);
    const double L = *obj.exact_lipschitz();
    const auto run = [&](int K, long T) {
        TheoremInputs in{L, K, 20, 20, 0, Regime::full, 0.0};
        const StageSchedule sched = StageSchedule::single(preset(Preset::fedsgd, 1.0, 0.0), T);
        const double eta_l = 0.9 * check_theorem_conditions(sched, in).max_eta_l;
        return run_sync(obj, sched, LocalPlan::uniform({eta_l, K, {}}), {}, ParamVector(10)).final_grad_sq;
    };
    CHECK(run(1, 500) <= 1e-20);
    const double floor = run(5, 500);
    CHECK(floor > 1e-7);
    CHECK(run(5, 2000) == doctest::Approx(floor).epsilon(1e-6));
}

TEST_CASE("full participation aggregate is the virtual average, partial is unbiased for it") {
    const GlobalObjective obj = random_quadratic(12, 3, 5);
    const ParamVector x{0.5, -0.5, 1.0};
    const LocalConfig cfg{0.05, 3, {}};
    std::vector<LocalDelta> all;
    for (int i = 0; i < 12; ++i) {
        Rng rng = local_stream(1, i, 0);
        all.push_back(local_sgd(obj.client(static_cast<std::size_t>(i)), x, cfg, rng, 0));
    }
    const ParamVector virtual_avg = aggregate_mean(all).delta;
    const int draws = 2000;
    ParamVector sum(3), sum_sq(3);
    for (int r = 0; r < draws; ++r) {
        std::vector<LocalDelta> cohort;
        for (int i : sample_cohort(partial(4, 3), 12, r)) cohort.push_back(all[static_cast<std::size_t>(i)]);
        const ParamVector d = aggregate_mean(cohort).delta;
        for (std::size_t k = 0; k < 3; ++k) {
            sum[k] += d[k];
            sum_sq[k] += d[k] * d[k];
        }
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double mean = sum[k] / draws;
        const double sd = std::sqrt(sum_sq[k] / draws - mean * mean);
        CHECK(std::abs(mean - virtual_avg[k]) <= 3.0 * sd / std::sqrt(double(draws)));
    }
}

TEST_CASE("stage transitions happen at cumulative boundaries") {
    const GlobalObjective obj = random_quadratic(4, 3, 6);
    const std::vector<double> etas{2.0, 1.0, 0.5}, nus{0.9, 0.9, 0.9};
    const auto betas = solve_betas(etas, nus, 0.5);
    const auto len = stage_lengths(etas, 1001);
    StageSchedule sched;
    for (std::size_t s = 0; s < 3; ++s) sched.stages.push_back({etas[s], betas[s], nus[s], len[s]});
    const RunLog log = run_sync(obj, sched, LocalPlan::uniform({0.01, 1, {}}), {}, ParamVector(3), {.metrics_every = 50});
    REQUIRE(log.records.size() == 1001);
    for (const auto& r : log.records) CHECK(r.stage == (r.round < 143 ? 1 : r.round < 429 ? 2 : 3));
    CHECK(std::isnan(log.records[1].grad_sq_norm));
    CHECK_FALSE(std::isnan(log.records[50].grad_sq_norm));
}

TEST_CASE("audited runs satisfy the Lyapunov identity") {
    const GlobalObjective obj = random_quadratic(8, 4, 7);
    const std::vector<double> etas{2.0, 1.0, 0.5}, nus{0.8, 0.8, 0.8};
    const auto betas = solve_betas(etas, nus, 0.6);
    const auto len = stage_lengths(etas, 210);
    StageSchedule sched;
    for (std::size_t s = 0; s < 3; ++s) sched.stages.push_back({etas[s], betas[s], nus[s], len[s]});
    const RunLog log = run_sync(obj, sched, LocalPlan::uniform({0.02, 2, MinibatchSpec{5}}), partial(3),
                                ParamVector(4, 1.0), {.audit = true, .seed = 2});
    CHECK(log.audited);
    CHECK(log.max_scaled_residual <= 1e-10);
    for (const auto& r : log.records) CHECK(std::isfinite(r.lyapunov_residual));

    StageSchedule bad;
    bad.stages = {{1.0, 0.5, 0.5, 10}, {1.0, 0.6, 0.5, 10}};  // beta rises at fixed eta, nu: W1 changes
    CHECK_THROWS_AS(run_sync(obj, bad, LocalPlan::uniform({0.02, 2, {}}), {}, ParamVector(4), {.audit = true}),
                    AuditInapplicable);
    CHECK_NOTHROW(run_sync(obj, bad, LocalPlan::uniform({0.02, 2, {}}), {}, ParamVector(4), {}));
}

TEST_CASE("divergence ends the run and is recorded") {
    const GlobalObjective obj = point_quadratics({{1.0}, {-1.0}});
    const RunLog log = run_sync(obj, StageSchedule::single({50.0, 0.0, 0.0}, 200), LocalPlan::uniform({0.5, 2, {}}), {},
                                ParamVector{3.0});
    CHECK(log.diverged);
    CHECK(log.divergence_round >= 0);
    CHECK(log.records.size() == static_cast<std::size_t>(log.divergence_round + 1));
    CHECK(std::isnan(log.final_loss));
    const std::string csv = csv_of(log);
    CHECK(csv.find("# diverged") != std::string::npos);
    std::istringstream in(csv);
    const RunLog back = read_run_log_csv(in);
    CHECK(back.diverged);
}

TEST_CASE("invalid runs are rejected up front") {
    const GlobalObjective obj = point_quadratics({{1.0}});
    StageSchedule bad;
    bad.stages = {{1.0, 0.0, 0.0, 10}, {2.0, 0.0, 0.0, 10}};
    CHECK_THROWS_AS(run_sync(obj, bad, LocalPlan::uniform({0.1, 1, {}}), {}, ParamVector{0.0}), ConfigError);
    CHECK_THROWS_AS(run_sync(obj, StageSchedule::single({1.0, 0.0, 0.0}, 5), LocalPlan::uniform({0.1, 1, {}}), {},
                             ParamVector{0.0, 1.0}),
                    ConfigError);
    CHECK_THROWS_AS(run_sync(obj, StageSchedule::single({1.0, 0.0, 0.0}, 5), LocalPlan::uniform({0.1, 1, {}}), partial(2),
                             ParamVector{0.0}),
                    ConfigError);
}

TEST_CASE("run log csv round trip") {
    const GlobalObjective obj = random_quadratic(5, 3, 8);
    const RunLog log = run_sync(obj, StageSchedule::single({1.0, 0.9, 0.9}, 40), LocalPlan::uniform({0.05, 2, {}}),
                                partial(2), ParamVector(3), {.audit = true, .metrics_every = 3});
    std::istringstream in(csv_of(log));
    const RunLog back = read_run_log_csv(in);
    REQUIRE(back.records.size() == log.records.size());
    for (std::size_t t = 0; t < log.records.size(); ++t) {
        const auto& a = log.records[t];
        const auto& b = back.records[t];
        CHECK(a.round == b.round);
        CHECK(a.stage == b.stage);
        CHECK(a.participants_hash == b.participants_hash);
        CHECK(a.h_norm == b.h_norm);
        CHECK(a.lyapunov_residual == b.lyapunov_residual);
        if (std::isnan(a.grad_sq_norm)) {
            CHECK(std::isnan(b.grad_sq_norm));
        } else {
            CHECK(a.grad_sq_norm == b.grad_sq_norm);
            CHECK(a.train_loss == b.train_loss);
        }
    }
    CHECK(hash_participants(std::vector<int>{3, 1}) == hash_participants(std::vector<int>{1, 3}));
    CHECK(hash_participants(std::vector<int>{1, 2}) != hash_participants(std::vector<int>{1, 3}));
}
