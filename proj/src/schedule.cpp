#include "fedgm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedgm/errors.hpp"

namespace fedgm {

long StageSchedule::total_rounds() const {
    long t = 0;
    for (const auto& s : stages) t += s.rounds;
    return t;
}

int StageSchedule::stage_of_round(long t) const {
    long end = 0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        end += stages[s].rounds;
        if (t < end) return static_cast<int>(s + 1);
    }
    return static_cast<int>(stages.size());
}

std::vector<long> StageSchedule::boundaries() const {
    std::vector<long> out;
    long start = 0;
    for (const auto& s : stages) {
        out.push_back(start);
        start += s.rounds;
    }
    return out;
}

StageSchedule StageSchedule::single(const MomentumHyper& h, long rounds) {
    return StageSchedule{{Stage{h.eta, h.beta, h.nu, rounds}}};
}

DerivedConstants derive(const StageSchedule& sched) {
    if (sched.stages.empty()) throw ConfigError("schedule", "schedule has no stages");
    DerivedConstants d;
    const auto& st = sched.stages;
    d.stages = static_cast<int>(st.size());
    d.total_rounds = sched.total_rounds();
    double inv_eta_sum = 0.0;
    for (const auto& s : st) {
        d.w1_per_stage.push_back(s.hyper().w1());
        d.w2_per_stage.push_back(static_cast<double>(s.rounds) * s.eta);
        d.eta_bar += s.eta;
        d.eta_hat2 += s.eta * s.eta;
        d.eta_hat3 += s.eta * s.eta * s.eta;
        inv_eta_sum += 1.0 / s.eta;
    }
    const double S = static_cast<double>(st.size());
    d.eta_bar /= S;
    d.eta_hat2 /= S;
    d.eta_hat3 /= S;
    d.w1 = d.w1_per_stage.front();
    d.w2 = static_cast<double>(d.total_rounds) / inv_eta_sum;
    d.c_eta = st.front().eta / st.back().eta;
    d.c_beta = (1.0 - st.front().beta) / (1.0 - st.back().beta);
    return d;
}

bool ValidationReport::runnable() const {
    return std::all_of(violations.begin(), violations.end(),
                       [](const Violation& v) { return v.rounding_only || v.constraint == "W1 constant"; });
}

bool ValidationReport::has(const std::string& constraint) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.constraint == constraint; });
}

ValidationReport validate(const StageSchedule& sched) {
    ValidationReport rep;
    rep.derived = derive(sched);
    const auto& st = sched.stages;
    const double S = static_cast<double>(st.size());

    for (std::size_t i = 0; i < st.size(); ++i) {
        const int s = static_cast<int>(i + 1);
        if (!(st[i].eta > 0.0)) rep.violations.push_back({"eta positive", s, "eta must be > 0"});
        if (!(st[i].beta >= 0.0 && st[i].beta < 1.0)) rep.violations.push_back({"beta range", s, "beta must lie in [0,1)"});
        if (!(st[i].nu >= 0.0 && st[i].nu <= 1.0)) rep.violations.push_back({"nu range", s, "nu must lie in [0,1]"});
        if (st[i].rounds < 1) rep.violations.push_back({"stage length", s, "stage needs at least one round"});
        if (i == 0) continue;
        if (st[i].eta > st[i - 1].eta)
            rep.violations.push_back({"eta non-increasing", s, "eta rises from stage " + std::to_string(s - 1)});
        if (st[i].beta < st[i - 1].beta)
            rep.violations.push_back({"beta non-decreasing", s, "beta falls from stage " + std::to_string(s - 1)});
    }

    const auto& w1 = rep.derived.w1_per_stage;
    for (std::size_t i = 1; i < w1.size(); ++i)
        if (!w1_equal(w1[i], w1[0]))
            rep.violations.push_back({"W1 constant", static_cast<int>(i + 1),
                                      "eta*beta*nu/(1-beta) = " + std::to_string(w1[i]) + " vs " + std::to_string(w1[0])});

    const double w2 = rep.derived.w2;
    for (std::size_t i = 0; i < st.size(); ++i) {
        const double ts_eta = rep.derived.w2_per_stage[i];
        if (std::abs(ts_eta - w2) <= 1e-9 * w2) continue;
        Violation v{"W2 constant", static_cast<int>(i + 1),
                    "T_s*eta_s = " + std::to_string(ts_eta) + " vs " + std::to_string(w2)};
        v.rounding_only = std::abs(static_cast<double>(st[i].rounds) - w2 / st[i].eta) <= 0.5 * S;
        rep.violations.push_back(v);
    }

    rep.c_beta_within_c_eta = rep.derived.c_beta <= rep.derived.c_eta + 1e-9;
    return rep;
}

std::vector<double> solve_betas(std::span<const double> etas, std::span<const double> nus, double beta1) {
    if (etas.empty() || etas.size() != nus.size())
        throw ConfigError("schedule", "eta and nu lists must be non-empty and of equal length");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ScheduleInfeasible(1, "beta_1 must lie in [0,1)");
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] > 0.0)) throw ScheduleInfeasible(static_cast<int>(i + 1), "eta must be positive");
        if (!(nus[i] >= 0.0 && nus[i] <= 1.0)) throw ScheduleInfeasible(static_cast<int>(i + 1), "nu must lie in [0,1]");
    }
    const double w1 = etas[0] * beta1 * nus[0] / (1.0 - beta1);
    std::vector<double> betas{beta1};
    for (std::size_t i = 1; i < etas.size(); ++i) {
        const int s = static_cast<int>(i + 1);
        double beta;
        if (nus[i] == 0.0) {
            if (w1 != 0.0) throw ScheduleInfeasible(s, "nu_s = 0 cannot reproduce a non-zero W1 at stage " + std::to_string(s));
            beta = betas.back();  // any non-decreasing value works; keep the previous one
        } else {
            const double r = w1 / (etas[i] * nus[i]);
            beta = r / (1.0 + r);
        }
        if (!(beta >= 0.0 && beta < 1.0))
            throw ScheduleInfeasible(s, "beta outside [0,1) at stage " + std::to_string(s));
        if (beta < betas.back() && betas.back() - beta <= 1e-12 * betas.back()) beta = betas.back();  // rounding
        if (beta < betas.back())
            throw ScheduleInfeasible(s, "solved beta decreases at stage " + std::to_string(s) +
                                            " (W1 constancy conflicts with beta non-decreasing)");
        betas.push_back(beta);
    }
    return betas;
}

std::vector<long> stage_lengths(std::span<const double> etas, long total_rounds) {
    if (etas.empty()) throw ConfigError("schedule", "no stages");
    if (total_rounds < static_cast<long>(etas.size())) throw ConfigError("schedule", "fewer rounds than stages");
    double inv = 0.0;
    for (double e : etas) {
        if (!(e > 0.0)) throw ConfigError("schedule", "eta must be positive");
        inv += 1.0 / e;
    }
    const double w2 = static_cast<double>(total_rounds) / inv;
    std::vector<long> out;
    long used = 0;
    for (std::size_t i = 0; i + 1 < etas.size(); ++i) {
        const long t = std::max(1L, std::lround(w2 / etas[i]));
        out.push_back(t);
        used += t;
    }
    if (total_rounds - used < 1) throw ConfigError("schedule", "rounding left the final stage empty");
    out.push_back(total_rounds - used);
    return out;
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::full: return "full";
        case Regime::partial: return "partial";
        case Regime::autonomous: return "autonomous";
    }
    return "unknown";
}

ConditionReport check_theorem_conditions(const StageSchedule& sched, const TheoremInputs& in) {
    const DerivedConstants d = derive(sched);
    const double L = in.L, K = in.K, S = d.stages, C = d.c_eta, W1 = d.w1;
    const double inf = std::numeric_limits<double>::infinity();
    ConditionReport rep;
    rep.regime = in.regime;
    rep.eta_l = in.eta_l;
    switch (in.regime) {
        case Regime::full:
            rep.terms.push_back({"1/(8KL)", 1.0 / (8.0 * K * L)});
            rep.terms.push_back({"1/(K S C_eta (L eta_bar + 1 + L^2 W1^2 C_eta))",
                                 1.0 / (K * S * C * (L * d.eta_bar + 1.0 + L * L * W1 * W1 * C))});
            break;
        case Regime::partial: {
            const double n = in.n, m = in.m;
            const double first = in.m > 1 ? m * (n - 1.0) / (n * (m - 1.0)) : inf;
            const double cap = std::min(first, 17.0 * m / 282.0);
            rep.terms.push_back({"1/(8KL)", 1.0 / (8.0 * K * L)});
            rep.terms.push_back({"min{m(n-1)/(n(m-1)), 17m/282} / ((C_eta + L eta_bar C_eta + L^2 W1^2 C_eta) S K)",
                                 cap / ((C + L * d.eta_bar * C + L * L * W1 * W1 * C) * S * K)});
            break;
        }
        case Regime::autonomous:
            rep.terms.push_back({"1/(8 K_max L)", 1.0 / (8.0 * K * L)});
            rep.terms.push_back({"sqrt(1/(120 L^2 C_eta tau K_max^2))",
                                 in.tau == 0 ? inf : std::sqrt(1.0 / (120.0 * L * L * C * in.tau * K * K))});
            break;
    }
    rep.max_eta_l = inf;
    for (const auto& t : rep.terms) rep.max_eta_l = std::min(rep.max_eta_l, t.value);
    rep.satisfied = in.eta_l <= rep.max_eta_l;
    return rep;
}

}  // namespace fedgm
