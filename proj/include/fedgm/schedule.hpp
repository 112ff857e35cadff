#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedgm/server_momentum.hpp"

namespace fedgm {

/// One "constant and drop" stage. Stages are numbered 1..S externally; rounds
/// are numbered 0..T-1.
struct Stage {
    double eta = 1.0;
    double beta = 0.0;
    double nu = 0.0;
    long rounds = 0;

    MomentumHyper hyper() const { return {eta, beta, nu}; }
};

struct StageSchedule {
    std::vector<Stage> stages;

    long total_rounds() const;
    /// 1-based stage index of round t; rounds past the end map to the last stage.
    int stage_of_round(long t) const;
    MomentumHyper hyper_at(long t) const { return stages[static_cast<std::size_t>(stage_of_round(t) - 1)].hyper(); }
    /// Index of the first round of each stage.
    std::vector<long> boundaries() const;

    static StageSchedule single(const MomentumHyper& h, long rounds);
};

struct DerivedConstants {
    int stages = 0;
    long total_rounds = 0;
    double w1 = 0.0;        // stage-1 value of eta*beta*nu/(1-beta)
    double w2 = 0.0;        // T / sum(1/eta_s): the common T_s*eta_s an ideal split would hit
    double c_eta = 1.0;     // eta_1 / eta_S
    double c_beta = 1.0;    // (1-beta_1)/(1-beta_S)
    double eta_bar = 0.0;   // mean eta_s
    double eta_hat2 = 0.0;  // mean eta_s^2
    double eta_hat3 = 0.0;  // mean eta_s^3
    std::vector<double> w1_per_stage;
    std::vector<double> w2_per_stage;
};

DerivedConstants derive(const StageSchedule& sched);

struct Violation {
    std::string constraint;
    int stage = 0;  // 1-based; 0 when not tied to a stage
    std::string detail;
    /// Only set for "W2 constant": the mismatch is what integer stage lengths force.
    bool rounding_only = false;
};

struct ValidationReport {
    DerivedConstants derived;
    std::vector<Violation> violations;
    bool c_beta_within_c_eta = true;

    bool ok() const { return violations.empty(); }
    /// No violations apart from W2 mismatches caused by integer rounding and a
    /// non-constant W1 (which only rules out the Lyapunov audit).
    bool runnable() const;
    bool has(const std::string& constraint) const;
};

/// Checks ranges, eta non-increasing, beta non-decreasing, W1 constant (1e-9
/// relative, or all zero) and W2 constant (1e-9 relative). Throws ConfigError
/// on an empty schedule.
ValidationReport validate(const StageSchedule& sched);

/// beta_s solving eta_s beta_s nu_s / (1 - beta_s) = W1 with W1 fixed by stage 1.
/// Throws ScheduleInfeasible naming the first stage that cannot be satisfied
/// (solution outside [0,1) or beta decreasing).
std::vector<double> solve_betas(std::span<const double> etas, std::span<const double> nus, double beta1);

/// T_s = round(W2 / eta_s) with W2 = T / sum(1/eta_s); the last stage absorbs
/// the rounding so the lengths sum to T.
std::vector<long> stage_lengths(std::span<const double> etas, long total_rounds);

enum class Regime { full, partial, autonomous };

std::string to_string(Regime r);

struct TheoremInputs {
    double L = 1.0;
    int K = 1;  // K, or K_max for the autonomous regime
    int n = 1;
    int m = 1;
    int tau = 0;
    Regime regime = Regime::full;
    double eta_l = 0.0;  // configured local rate to compare against
};

struct ConditionTerm {
    std::string expression;
    double value = 0.0;
};

struct ConditionReport {
    Regime regime = Regime::full;
    std::vector<ConditionTerm> terms;
    double max_eta_l = 0.0;
    double eta_l = 0.0;
    bool satisfied = false;
};

/// Advisory local learning-rate bounds for the synchronous full/partial and
/// autonomous regimes.
ConditionReport check_theorem_conditions(const StageSchedule& sched, const TheoremInputs& in);

}  // namespace fedgm
