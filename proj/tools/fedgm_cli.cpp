// Command-line front end: run, grid, compare, validate.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include "fedgm/errors.hpp"
#include "fedgm/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitComparison = 4;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool audit = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "run configuration (JSON)")->required();
    cmd->add_option("--seed", f.seed, "override the run seed (drops any seed list)");
    cmd->add_option("--out", f.out, "override the output directory");
    cmd->add_flag("--audit", f.audit, "check the Lyapunov identity every round");
}

fedgm::RunConfig load(const CommonFlags& f) {
    fedgm::RunConfig cfg = fedgm::load_config(f.config);
    if (f.seed) {
        cfg.seed = *f.seed;
        cfg.seeds.clear();
        cfg.grid.seed.clear();
    }
    if (f.out) cfg.output = *f.out;
    if (f.audit) cfg.audit = true;
    fedgm::validate_config(cfg);
    return cfg;
}

void report(const fedgm::RunConfig& cfg, const fedgm::RunResult& r) {
    std::cout << std::setprecision(6) << cfg.name << ": ";
    if (r.log.diverged) {
        std::cout << "diverged at round " << r.log.divergence_round;
    } else {
        std::cout << "final loss " << r.log.final_loss << ", final G " << r.log.final_grad_sq;
    }
    if (r.log.audited) std::cout << ", max Lyapunov residual " << r.log.max_lyapunov_residual;
    std::cout << " -> " << cfg.output << '\n';
}

int run_members(const std::vector<fedgm::RunConfig>& members, int jobs) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> diverged{false};
    std::mutex io;
    const auto worker = [&] {
        for (std::size_t i = next++; i < members.size(); i = next++) {
            const fedgm::RunResult r = fedgm::execute(members[i]);
            fedgm::write_artifacts(r, members[i].output);
            if (r.log.diverged) diverged = true;
            std::lock_guard lock(io);
            report(members[i], r);
        }
    };
    std::vector<std::thread> pool;
    for (int j = 1; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return diverged ? kExitDivergence : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multistage federated general momentum experiments"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "execute a configuration (and its seed list)");
    add_common(run, run_flags);

    CommonFlags grid_flags;
    bool list_only = false;
    int jobs = 1;
    CLI::App* grid = app.add_subcommand("grid", "expand and execute a hyperparameter grid");
    add_common(grid, grid_flags);
    grid->add_flag("--list", list_only, "print the grid members without running them");
    grid->add_option("--jobs", jobs, "runs executed concurrently")->check(CLI::PositiveNumber);

    std::vector<std::string> manifests;
    double threshold = 1e-3;
    std::string table_out;
    CLI::App* cmp = app.add_subcommand("compare", "tabulate completed runs");
    cmp->add_option("manifests", manifests, "manifest.json files")->required();
    cmp->add_option("--threshold", threshold, "G_t level for rounds-to-threshold");
    cmp->add_option("--out", table_out, "write the table to this CSV file");

    CommonFlags val_flags;
    CLI::App* val = app.add_subcommand("validate", "check schedule constraints and local learning-rate conditions");
    add_common(val, val_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const fedgm::RunConfig cfg = load(run_flags);
            if (!cfg.grid.eta.empty() || !cfg.grid.beta.empty() || !cfg.grid.nu.empty())
                throw fedgm::ConfigError("grid", "configuration declares a grid; use the grid verb");
            return run_members(fedgm::expand_grid(cfg), 1);
        }
        if (*grid) {
            const std::vector<fedgm::RunConfig> members = fedgm::expand_grid(load(grid_flags));
            if (list_only) {
                for (const auto& m : members) {
                    const fedgm::Stage& s = m.schedule.stages.front();
                    std::cout << m.name << " eta=" << s.eta << " beta=" << s.beta << " nu=" << s.nu
                              << " seed=" << m.seed << " out=" << m.output << '\n';
                }
                std::cout << members.size() << " runs\n";
                return 0;
            }
            return run_members(members, jobs);
        }
        if (*cmp) {
            std::vector<std::filesystem::path> paths(manifests.begin(), manifests.end());
            const auto rows = fedgm::compare(paths, threshold);
            if (table_out.empty()) {
                fedgm::write_comparison_csv(rows, std::cout);
            } else {
                std::ofstream os(table_out);
                fedgm::write_comparison_csv(rows, os);
            }
            return 0;
        }
        if (*val) {
            const fedgm::RunConfig cfg = load(val_flags);
            const fedgm::StageSchedule sched = cfg.stage_schedule();
            const fedgm::ValidationReport rep = fedgm::validate(sched);
            const fedgm::BuiltProblem prob = fedgm::build_problem(cfg);
            fedgm::TheoremInputs in;
            in.L = fedgm::estimate_lipschitz(prob.objective, prob.x0, cfg.seed);
            in.n = static_cast<int>(prob.objective.num_clients());
            in.eta_l = cfg.local.eta_l;
            if (cfg.regime.mode == fedgm::RegimeSpec::Mode::sync) {
                in.regime = cfg.regime.full ? fedgm::Regime::full : fedgm::Regime::partial;
                in.m = cfg.regime.full ? in.n : cfg.regime.m;
                in.K = prob.plan.max_steps();
            } else {
                const fedgm::AsyncConfig a = fedgm::resolve_async(cfg, prob.plan);
                in.regime = fedgm::Regime::autonomous;
                in.m = a.m;
                in.K = a.k_model.max_k();
                in.tau = a.delay_bound();
            }
            const fedgm::ConditionReport cond = fedgm::check_theorem_conditions(sched, in);
            const auto& d = rep.derived;
            std::cout << std::setprecision(8) << "stages " << d.stages << ", T " << d.total_rounds << "\n"
                      << "W1 " << d.w1 << ", W2 " << d.w2 << ", C_eta " << d.c_eta << ", C_beta " << d.c_beta
                      << ", eta_bar " << d.eta_bar << "\n";
            for (const auto& v : rep.violations)
                std::cout << (v.rounding_only ? "note: " : "violation: ") << v.constraint
                          << (v.stage ? " (stage " + std::to_string(v.stage) + ")" : "") << ": " << v.detail << '\n';
            std::cout << "regime " << fedgm::to_string(cond.regime) << ", L_hat " << in.L << ", K " << in.K << '\n';
            for (const auto& t : cond.terms) std::cout << "  " << t.expression << " = " << t.value << '\n';
            std::cout << "eta_l " << cond.eta_l << (cond.satisfied ? " <= " : " > ") << "bound " << cond.max_eta_l
                      << '\n';
            return 0;
        }
    } catch (const fedgm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const fedgm::AuditInapplicable& e) {
        std::cerr << "config error [audit]: " << e.what() << '\n';
        return kExitConfig;
    } catch (const fedgm::ComparisonError& e) {
        std::cerr << "comparison error: " << e.what() << '\n';
        return kExitComparison;
    } catch (const fedgm::DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
