#include "fedgm/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <regex>

#include "fedgm/async_runner.hpp"
#include "fedgm/errors.hpp"
#include "fedgm/partition.hpp"

namespace fedgm {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) { return j.is_number() ? j.get<double>() : kNaN; }

json heterogeneity_json(const HeterogeneityReport& h) {
    return {{"sigma_g_sq_hat", finite_or_null(h.sigma_g_sq_hat)},
            {"sigma_l_sq_hat", finite_or_null(h.sigma_l_sq_hat)},
            {"L_hat", finite_or_null(h.L_hat)}};
}

json problem_key(const RunConfig& cfg) {
    json j = to_json(cfg);
    json key = {{"problem", j["problem"]}, {"partition", j["partition"]}};
    key["problem"].erase("seed");
    key["partition"].erase("seed");
    return key;
}

}  // namespace

BuiltProblem build_problem(const RunConfig& cfg) {
    const SyntheticSpec& spec = cfg.problem.synth;
    const Dataset pool = generate_pool(spec, cfg.data_seed());
    std::vector<Dataset> client_data;
    if (cfg.partition.mode == PartitionSpec::Mode::identical) {
        client_data.assign(cfg.partition.n_clients, pool);
    } else {
        const PartitionConfig pcfg{cfg.partition.alpha, cfg.partition.n_clients, spec.labels, spec.samples_per_label,
                                   cfg.partition_seed()};
        client_data = materialize(draw_partition(pcfg), pool, cfg.partition_seed());
    }
    GlobalObjective obj = build_objective(spec, std::move(client_data), cfg.data_seed());
    ParamVector x0 = initial_point(spec.shape(), cfg.data_seed());
    const MinibatchSpec batch{cfg.local.batch};
    LocalPlan plan = cfg.local.epochs ? LocalPlan::from_epochs(cfg.local.eta_l, *cfg.local.epochs, batch, obj)
                                      : LocalPlan::uniform(LocalConfig{cfg.local.eta_l, *cfg.local.steps, batch});
    return BuiltProblem{std::move(obj), std::move(x0), std::move(plan)};
}

AsyncConfig resolve_async(const RunConfig& cfg, const LocalPlan& plan) {
    AsyncConfig a;
    a.m = cfg.regime.m;
    a.staleness = cfg.regime.staleness;
    a.arrival = cfg.regime.arrival;
    a.seed = cfg.seed;
    if (cfg.regime.k_model) {
        a.k_model = *cfg.regime.k_model;
    } else if (plan.steps_per_client.empty()) {
        a.k_model.kind = KModel::Kind::fixed;
        a.k_model.lo = a.k_model.hi = plan.base.steps;
    } else {
        a.k_model.kind = KModel::Kind::per_client;
        a.k_model.per_client = plan.steps_per_client;
    }
    return a;
}

RunResult execute(const RunConfig& cfg) {
    validate_config(cfg);
    const StageSchedule sched = cfg.stage_schedule();
    BuiltProblem prob = build_problem(cfg);
    const GlobalObjective& obj = prob.objective;
    const int n = static_cast<int>(obj.num_clients());

    RunOptions opts;
    opts.audit = cfg.audit;
    opts.normalize_deltas = cfg.normalize_deltas;
    opts.metrics_every = cfg.metrics_every;
    opts.seed = cfg.seed;

    RunResult res;
    TheoremInputs thm;
    thm.n = n;
    thm.eta_l = cfg.local.eta_l;
    json k_per_client = json::array();
    if (cfg.regime.mode == RegimeSpec::Mode::sync) {
        ParticipationConfig pcfg;
        pcfg.mode = cfg.regime.full ? ParticipationConfig::Mode::full : ParticipationConfig::Mode::partial;
        pcfg.m = cfg.regime.full ? n : cfg.regime.m;
        pcfg.seed = cfg.seed;
        res.log = run_sync(obj, sched, prob.plan, pcfg, prob.x0, opts);
        thm.regime = cfg.regime.full ? Regime::full : Regime::partial;
        thm.m = pcfg.m;
        thm.K = prob.plan.max_steps();
        for (int i = 0; i < n; ++i) k_per_client.push_back(prob.plan.for_client(i).steps);
    } else {
        const AsyncConfig acfg = resolve_async(cfg, prob.plan);
        res.log = run_async(obj, sched, prob.plan.base, acfg, prob.x0, opts);
        thm.regime = Regime::autonomous;
        thm.m = acfg.m;
        thm.K = acfg.k_model.max_k();
        thm.tau = acfg.delay_bound();
        if (acfg.k_model.kind == KModel::Kind::per_client) {
            k_per_client = acfg.k_model.per_client;
        } else {
            k_per_client = {{"model", acfg.k_model.kind == KModel::Kind::fixed ? "fixed" : "uniform_range"},
                            {"lo", acfg.k_model.lo},
                            {"hi", acfg.k_model.hi}};
        }
    }

    const MinibatchSpec batch{cfg.local.batch};
    res.heterogeneity_x0 = estimate_heterogeneity(obj, prob.x0, batch, cfg.heterogeneity_draws, cfg.seed);
    json het_final = nullptr;
    if (!res.log.diverged) {
        res.heterogeneity_final = estimate_heterogeneity(obj, res.log.final_x, batch, cfg.heterogeneity_draws, cfg.seed);
        het_final = heterogeneity_json(res.heterogeneity_final);
    } else {
        res.heterogeneity_final = {kNaN, kNaN, kNaN};
    }
    thm.L = res.heterogeneity_x0.L_hat;
    const ConditionReport cond = check_theorem_conditions(sched, thm);

    json stage_json = json::array();
    double g_bar = kNaN;
    try {
        res.averages = stage_averages(res.log, sched);
        g_bar = res.averages.G_bar;
        for (const auto& s : res.averages.stages)
            stage_json.push_back({{"stage", s.stage},
                                  {"G_bar_s", finite_or_null(s.G_bar_s)},
                                  {"mean_loss", finite_or_null(s.mean_loss)},
                                  {"rounds", s.rounds}});
    } catch (const ConfigError&) {
        res.averages.partial = true;
    }

    const ValidationReport rep = validate(sched);
    const DerivedConstants& d = rep.derived;
    json violations = json::array();
    for (const auto& v : rep.violations)
        violations.push_back(
            {{"constraint", v.constraint}, {"stage", v.stage}, {"detail", v.detail}, {"rounding_only", v.rounding_only}});
    json terms = json::array();
    for (const auto& t : cond.terms) terms.push_back({{"expression", t.expression}, {"value", finite_or_null(t.value)}});

    json phis = nullptr;
    try {
        const StalenessStats st = staleness_stats(res.log);
        json hist = json::object();
        for (const auto& [tau, count] : st.tau_hist) hist[std::to_string(tau)] = count;
        phis = {{"phi1", st.phi1}, {"phi2", st.phi2}, {"phi3", st.phi3}, {"tau_histogram", hist}};
    } catch (const ConfigError&) {
    }

    json& m = res.manifest;
    m["config"] = to_json(cfg);
    m["problem_key"] = problem_key(cfg);
    m["derived"] = {{"stages", d.stages},           {"total_rounds", d.total_rounds}, {"W1", d.w1},
                    {"W2", d.w2},                   {"C_eta", d.c_eta},               {"C_beta", d.c_beta},
                    {"eta_bar", d.eta_bar},         {"eta_hat2", d.eta_hat2},         {"eta_hat3", d.eta_hat3},
                    {"W1_per_stage", d.w1_per_stage}, {"W2_per_stage", d.w2_per_stage},
                    {"C_beta_within_C_eta", rep.c_beta_within_c_eta}};
    m["schedule_violations"] = violations;
    m["K_per_client"] = k_per_client;
    m["phi"] = phis;
    m["theorem_conditions"] = {{"regime", to_string(cond.regime)},
                               {"L_hat", finite_or_null(thm.L)},
                               {"K", thm.K},
                               {"n", thm.n},
                               {"m", thm.m},
                               {"tau", thm.tau},
                               {"terms", terms},
                               {"max_eta_l", finite_or_null(cond.max_eta_l)},
                               {"eta_l", cond.eta_l},
                               {"satisfied", cond.satisfied}};
    m["heterogeneity"] = {{"x0", heterogeneity_json(res.heterogeneity_x0)}, {"final", het_final}};
    m["result"] = {{"rounds_completed", static_cast<long>(res.log.records.size())},
                   {"diverged", res.log.diverged},
                   {"divergence_round", res.log.divergence_round},
                   {"final_loss", finite_or_null(res.log.final_loss)},
                   {"final_grad_sq", finite_or_null(res.log.final_grad_sq)},
                   {"G_bar", finite_or_null(g_bar)},
                   {"stage_averages", stage_json},
                   {"partial", res.averages.partial},
                   {"audited", res.log.audited},
                   {"max_lyapunov_residual", res.log.max_lyapunov_residual},
                   {"max_scaled_residual", res.log.max_scaled_residual}};
    m["artifacts"] = {"run_log.csv", "stage_summary.csv", "heterogeneity.json", "manifest.json"};
    return res;
}

void write_artifacts(const RunResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "run_log.csv");
        write_run_log_csv(result.log, os);
    }
    {
        std::ofstream os(dir / "stage_summary.csv");
        write_stage_summary_csv(result.averages, os);
    }
    {
        std::ofstream os(dir / "heterogeneity.json");
        os << std::setw(2) << result.manifest.at("heterogeneity") << '\n';
    }
    {
        std::ofstream os(dir / "manifest.json");
        os << std::setw(2) << result.manifest << '\n';
    }
    for (const char* name : {"run_log.csv", "stage_summary.csv", "heterogeneity.json", "manifest.json"})
        if (!std::filesystem::exists(dir / name)) throw std::runtime_error("failed to write " + (dir / name).string());
}

std::pair<double, double> mean_and_se(const std::vector<double>& values) {
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.empty()) return {kNaN, kNaN};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, kNaN};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

std::vector<ComparisonRow> compare(const std::vector<std::filesystem::path>& manifests, double g_threshold) {
    if (manifests.size() < 2) throw ComparisonError("compare needs at least two runs");
    struct Group {
        std::vector<double> loss, g, rounds;
        int diverged = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, Group> groups;
    json key;
    const std::regex seed_suffix("_seed[0-9]+$");
    for (const auto& path : manifests) {
        std::ifstream in(path);
        if (!in) throw ComparisonError("cannot open manifest " + path.string());
        json m;
        try {
            in >> m;
        } catch (const json::exception& e) {
            throw ComparisonError("unreadable manifest " + path.string() + ": " + e.what());
        }
        if (!m.contains("problem_key") || !m.contains("result") || !m.contains("config"))
            throw ComparisonError("not a run manifest: " + path.string());
        if (key.is_null()) {
            key = m["problem_key"];
        } else if (key != m["problem_key"]) {
            throw ComparisonError("runs are on different problems: " + path.string());
        }
        const std::string label = std::regex_replace(m["config"]["name"].get<std::string>(), seed_suffix, "");
        if (!groups.count(label)) order.push_back(label);
        Group& g = groups[label];
        const json& r = m["result"];
        g.diverged += r["diverged"].get<bool>();
        g.loss.push_back(number_or_nan(r["final_loss"]));
        g.g.push_back(number_or_nan(r["final_grad_sq"]));

        double reached = kNaN;
        std::ifstream log_in(path.parent_path() / "run_log.csv");
        if (log_in) {
            const RunLog log = read_run_log_csv(log_in);
            for (const auto& rec : log.records) {
                if (std::isfinite(rec.grad_sq_norm) && rec.grad_sq_norm <= g_threshold) {
                    reached = static_cast<double>(rec.round);
                    break;
                }
            }
        }
        g.rounds.push_back(reached);
    }

    std::vector<ComparisonRow> rows;
    for (const auto& label : order) {
        const Group& g = groups[label];
        ComparisonRow row;
        row.label = label;
        row.runs = static_cast<int>(g.loss.size());
        row.diverged = g.diverged;
        std::tie(row.final_loss_mean, row.final_loss_se) = mean_and_se(g.loss);
        std::tie(row.final_G_mean, row.final_G_se) = mean_and_se(g.g);
        row.rounds_to_threshold_mean = mean_and_se(g.rounds).first;
        rows.push_back(row);
    }
    for (auto& row : rows) {
        row.final_loss_diff = row.final_loss_mean - rows.front().final_loss_mean;
        row.final_G_diff = row.final_G_mean - rows.front().final_G_mean;
    }
    return rows;
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& os) {
    os << std::setprecision(10)
       << "label,runs,diverged,final_loss_mean,final_loss_se,final_G_mean,final_G_se,rounds_to_threshold,"
          "final_loss_diff,final_G_diff\n";
    for (const auto& r : rows)
        os << r.label << ',' << r.runs << ',' << r.diverged << ',' << r.final_loss_mean << ',' << r.final_loss_se << ','
           << r.final_G_mean << ',' << r.final_G_se << ',' << r.rounds_to_threshold_mean << ',' << r.final_loss_diff
           << ',' << r.final_G_diff << '\n';
}

}  // namespace fedgm
