#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fedgm/errors.hpp"
#include "fedgm/schedule.hpp"

using namespace fedgm;

namespace {

StageSchedule three_stage(double nu, double beta1) {
    const std::vector<double> etas{2.0, 1.0, 0.5};
    const std::vector<double> nus(3, nu);
    const auto betas = solve_betas(etas, nus, beta1);
    const auto lengths = stage_lengths(etas, 1001);
    StageSchedule s;
    for (std::size_t i = 0; i < 3; ++i) s.stages.push_back({etas[i], betas[i], nus[i], lengths[i]});
    return s;
}

}  // namespace

TEST_CASE("three-stage constant-and-drop schedule passes validation") {
    const StageSchedule s = three_stage(0.9, 0.5);
    CHECK(s.stages[0].rounds == 143);
    CHECK(s.stages[1].rounds == 286);
    CHECK(s.stages[2].rounds == 572);
    const ValidationReport rep = validate(s);
    CHECK(rep.ok());
    CHECK(rep.derived.w2 == doctest::Approx(286.0).epsilon(1e-12));
    for (double w : rep.derived.w2_per_stage) CHECK(w == doctest::Approx(286.0).epsilon(1e-12));
    CHECK(rep.derived.total_rounds == 1001);
    CHECK(rep.derived.c_eta == 4.0);
    CHECK(rep.derived.eta_bar == doctest::Approx(3.5 / 3.0));
    CHECK(rep.derived.eta_hat2 == doctest::Approx((4.0 + 1.0 + 0.25) / 3.0));
    CHECK(rep.derived.eta_hat3 == doctest::Approx((8.0 + 1.0 + 0.125) / 3.0));
    CHECK(rep.derived.w1 == doctest::Approx(2.0 * 0.5 * 0.9 / 0.5));
    CHECK(rep.c_beta_within_c_eta);
}

TEST_CASE("single stage is always consistent") {
    const ValidationReport rep = validate(StageSchedule::single({3.0, 0.95, 0.2}, 77));
    CHECK(rep.ok());
    CHECK(rep.derived.stages == 1);
    CHECK(rep.derived.w2 == doctest::Approx(231.0));
}

TEST_CASE("increasing eta is reported at stage 2") {
    StageSchedule s;
    s.stages = {{1.0, 0.0, 0.0, 10}, {2.0, 0.0, 0.0, 5}};
    const ValidationReport rep = validate(s);
    REQUIRE(rep.has("eta non-increasing"));
    for (const auto& v : rep.violations)
        if (v.constraint == "eta non-increasing") CHECK(v.stage == 2);
    CHECK_FALSE(rep.runnable());
}

TEST_CASE("other constraint violations") {
    StageSchedule s;
    s.stages = {{1.0, 0.9, 0.5, 10}, {1.0, 0.5, 0.5, 10}};
    CHECK(validate(s).has("beta non-decreasing"));
    CHECK(validate(s).has("W1 constant"));
    s.stages = {{1.0, 1.0, 0.5, 10}};
    CHECK(validate(s).has("beta range"));
    s.stages = {{1.0, 0.5, 1.5, 10}};
    CHECK(validate(s).has("nu range"));
    s.stages = {{0.0, 0.5, 0.5, 10}};
    CHECK(validate(s).has("eta positive"));
    s.stages = {{1.0, 0.5, 0.5, 0}};
    CHECK(validate(s).has("stage length"));
    s.stages = {{2.0, 0.0, 0.0, 10}, {1.0, 0.0, 0.0, 10}};
    CHECK(validate(s).has("W2 constant"));
    CHECK_THROWS_AS(validate(StageSchedule{}), ConfigError);
}

TEST_CASE("integer stage lengths leave only rounding-level W2 mismatches") {
    const std::vector<double> etas{3.0, 1.7, 0.9};
    const auto lengths = stage_lengths(etas, 500);
    CHECK(std::accumulate(lengths.begin(), lengths.end(), 0L) == 500);
    StageSchedule s;
    for (std::size_t i = 0; i < 3; ++i) s.stages.push_back({etas[i], 0.0, 0.0, lengths[i]});
    const ValidationReport rep = validate(s);
    CHECK(rep.runnable());
    for (const auto& v : rep.violations) CHECK(v.rounding_only);
}

TEST_CASE("solve_betas") {
    const std::vector<double> eta_const{1.0, 1.0, 1.0}, nu_const{0.8, 0.8, 0.8};
    for (double b : solve_betas(eta_const, nu_const, 0.7)) CHECK(b == doctest::Approx(0.7).epsilon(1e-15));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double eta = 0.1 + 5 * u(rng), nu = 0.01 + u(rng) * 0.99, b1 = 0.999 * u(rng);
        const std::vector<double> etas(4, eta), nus(4, nu);
        for (double bs : solve_betas(etas, nus, b1)) CHECK(bs == doctest::Approx(b1).epsilon(1e-12));
    }

    const std::vector<double> halving{1.0, 0.5, 0.25};
    const auto b = solve_betas(halving, nu_const, 0.5);
    CHECK(b[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(b[2] == doctest::Approx(0.8).epsilon(1e-14));

    const std::vector<double> zeros{0.0, 0.0, 0.0};
    const auto z = solve_betas(halving, zeros, 0.4);
    CHECK(z == std::vector<double>{0.4, 0.4, 0.4});
    StageSchedule s;
    for (std::size_t i = 0; i < 3; ++i) s.stages.push_back({halving[i], z[i], 0.0, 10});
    CHECK_FALSE(validate(s).has("W1 constant"));
}

TEST_CASE("solve_betas rejects infeasible stages") {
    const std::vector<double> etas{1.0, 0.5}, nus_rise{0.5, 1.0}, nus_zero{0.5, 0.0}, nus_drop{1.0, 0.1};
    // W1 fixed, eta halves and nu doubles: same beta is fine
    CHECK_NOTHROW(solve_betas(etas, nus_rise, 0.5));
    try {
        solve_betas(etas, nus_zero, 0.5);
        FAIL("expected infeasible");
    } catch (const ScheduleInfeasible& e) {
        CHECK(e.stage() == 2);
        CHECK(e.validator() == "schedule");
    }
    const std::vector<double> etas_flat{1.0, 1.0};
    CHECK_THROWS_AS(solve_betas(etas_flat, std::vector<double>{0.5, 1.0}, 0.5), ScheduleInfeasible);
    CHECK_THROWS_AS(solve_betas(etas, nus_drop, 1.0), ScheduleInfeasible);
}

TEST_CASE("solved betas keep W1 constant") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int accepted = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int S = 2 + trial % 4;
        std::vector<double> etas{0.5 + 4.5 * u(rng)}, nus{0.1 + 0.9 * u(rng)};
        for (int s = 1; s < S; ++s) {
            etas.push_back(etas.back() * (0.3 + 0.7 * u(rng)));
            nus.push_back(u(rng) < 0.5 ? nus.back() : 0.1 + 0.9 * u(rng));
        }
        std::vector<double> betas;
        try {
            betas = solve_betas(etas, nus, 0.95 * u(rng));
        } catch (const ScheduleInfeasible&) {
            continue;
        }
        ++accepted;
        StageSchedule sched;
        for (int s = 0; s < S; ++s) sched.stages.push_back({etas[s], betas[s], nus[s], 10});
        const ValidationReport rep = validate(sched);
        for (double w : rep.derived.w1_per_stage) CHECK(std::abs(w - rep.derived.w1) <= 1e-12 * std::max(1.0, rep.derived.w1));
        CHECK(rep.derived.c_eta >= 1.0);
        CHECK(rep.c_beta_within_c_eta == (rep.derived.c_beta <= rep.derived.c_eta + 1e-9));
    }
    CHECK(accepted > 100);
}

TEST_CASE("with a common nu, solved betas give C_beta <= C_eta") {
    // 1 - beta_s = 1/(1 + r_s) with r_s = W1/(eta_s nu), so C_beta = (1 + r_S)/(1 + r_1) <= r_S/r_1 = C_eta
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int S = 2 + trial % 4;
        const double nu = 0.05 + 0.95 * u(rng);
        std::vector<double> etas{0.5 + 4.5 * u(rng)};
        for (int s = 1; s < S; ++s) etas.push_back(etas.back() * (0.3 + 0.7 * u(rng)));
        const std::vector<double> nus(static_cast<std::size_t>(S), nu);
        const auto betas = solve_betas(etas, nus, 0.99 * u(rng));
        StageSchedule sched;
        for (int s = 0; s < S; ++s) sched.stages.push_back({etas[s], betas[s], nu, 10});
        const ValidationReport rep = validate(sched);
        CHECK(rep.derived.c_beta <= rep.derived.c_eta + 1e-9);
        CHECK(rep.c_beta_within_c_eta);
    }
}

TEST_CASE("stage lengths") {
    const std::vector<double> etas{2.0, 1.0, 0.5};
    CHECK(stage_lengths(etas, 1001) == std::vector<long>{143, 286, 572});
    CHECK(stage_lengths(std::vector<double>{1.0}, 500) == std::vector<long>{500});
    CHECK_THROWS_AS(stage_lengths(etas, 2), ConfigError);
}

TEST_CASE("stage boundaries") {
    const StageSchedule s = three_stage(0.9, 0.5);
    CHECK(s.total_rounds() == 1001);
    CHECK(s.boundaries() == std::vector<long>{0, 143, 429});
    CHECK(s.stage_of_round(0) == 1);
    CHECK(s.stage_of_round(142) == 1);
    CHECK(s.stage_of_round(143) == 2);
    CHECK(s.stage_of_round(428) == 2);
    CHECK(s.stage_of_round(429) == 3);
    CHECK(s.stage_of_round(1000) == 3);
    CHECK(s.stage_of_round(5000) == 3);
    CHECK(s.hyper_at(200).eta == 1.0);
}

TEST_CASE("full-participation learning-rate condition") {
    const StageSchedule s = StageSchedule::single({1.0, 0.0, 0.0}, 100);
    TheoremInputs in;
    in.L = 1.0;
    in.K = 5;
    in.regime = Regime::full;
    in.eta_l = 0.02;
    const ConditionReport rep = check_theorem_conditions(s, in);
    CHECK(rep.max_eta_l == doctest::Approx(0.025).epsilon(1e-15));
    CHECK(rep.satisfied);
    in.eta_l = 0.03;
    CHECK_FALSE(check_theorem_conditions(s, in).satisfied);
}

TEST_CASE("single stage without momentum approaches the FedAvg condition") {
    // second term 1/(K(L eta + 1)); relative to 1/(K L eta) it is L eta/(L eta + 1)
    for (double eta : {1.0, 10.0, 1000.0}) {
        const StageSchedule s = StageSchedule::single({eta, 0.5, 0.0}, 10);
        TheoremInputs in;
        in.L = 2.0;
        in.K = 3;
        const ConditionReport rep = check_theorem_conditions(s, in);
        REQUIRE(rep.terms.size() == 2);
        CHECK(rep.terms[0].value == doctest::Approx(1.0 / 48.0));
        CHECK(rep.terms[1].value == doctest::Approx(1.0 / (3.0 * (2.0 * eta + 1.0))));
        CHECK(rep.terms[1].value * 3.0 * 2.0 * eta == doctest::Approx(2.0 * eta / (2.0 * eta + 1.0)));
    }
}

TEST_CASE("partial-participation condition") {
    const StageSchedule s = StageSchedule::single({1.0, 0.0, 0.0}, 100);
    TheoremInputs in;
    in.L = 1.0;
    in.K = 2;
    in.n = 100;
    in.m = 5;
    in.regime = Regime::partial;
    const ConditionReport rep = check_theorem_conditions(s, in);
    const double cap = std::min(5.0 * 99.0 / (100.0 * 4.0), 17.0 * 5.0 / 282.0);
    CHECK(rep.max_eta_l == doctest::Approx(std::min(1.0 / 16.0, cap / (2.0 * 2.0))));
}

TEST_CASE("autonomous condition") {
    const StageSchedule s = StageSchedule::single({1.0, 0.5, 0.5}, 10);
    TheoremInputs in;
    in.L = 2.0;
    in.K = 6;
    in.regime = Regime::autonomous;
    in.tau = 0;
    ConditionReport rep = check_theorem_conditions(s, in);
    CHECK(std::isinf(rep.terms[1].value));
    CHECK(rep.max_eta_l == doctest::Approx(1.0 / 96.0));
    in.tau = 4;
    rep = check_theorem_conditions(s, in);
    CHECK(rep.terms[1].value == doctest::Approx(std::sqrt(1.0 / (120.0 * 4.0 * 4.0 * 36.0))));
}
