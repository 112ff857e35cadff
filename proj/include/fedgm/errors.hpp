#pragma once

#include <stdexcept>
#include <string>

namespace fedgm {

/// Invalid input or configuration. `validator` names the check that failed
/// (e.g. "schedule", "partition") so the CLI can report it.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string validator, const std::string& message)
        : std::runtime_error(validator + ": " + message), validator_(std::move(validator)) {}
    const std::string& validator() const { return validator_; }

private:
    std::string validator_;
};

/// An iterate left the finite / bounded region.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& message, long round = -1, long step = -1, long client = -1)
        : std::runtime_error(message), round_(round), step_(step), client_(client) {}
    long round() const { return round_; }
    long step() const { return step_; }
    long client() const { return client_; }

private:
    long round_;
    long step_;
    long client_;
};

/// The Lyapunov identity only holds when eta*beta*nu/(1-beta) is constant.
class AuditInapplicable : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// solve_betas could not satisfy the stagewise constraints.
class ScheduleInfeasible : public ConfigError {
public:
    ScheduleInfeasible(int stage, const std::string& message)
        : ConfigError("schedule", message), stage_(stage) {}
    int stage() const { return stage_; }

private:
    int stage_;
};

class ComparisonError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fedgm
