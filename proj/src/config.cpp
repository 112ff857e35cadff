#include "fedgm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedgm/errors.hpp"
#include "fedgm/partition.hpp"

namespace fedgm {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& validator) {
    if (!j.is_object()) throw ConfigError(validator, "expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError(validator, "unknown key '" + key + "'");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

ProblemConfig parse_problem(const json& j) {
    check_keys(j, {"kind", "features", "labels", "samples_per_label", "cluster_scale", "noise", "hidden", "l2",
                   "hessian", "seed"},
               "problem");
    ProblemConfig p;
    auto& s = p.synth;
    s.kind = problem_kind_from_string(get_or<std::string>(j, "kind", to_string(s.kind)));
    s.features = get_or(j, "features", s.features);
    s.labels = get_or(j, "labels", s.labels);
    s.samples_per_label = get_or(j, "samples_per_label", s.samples_per_label);
    s.cluster_scale = get_or(j, "cluster_scale", s.cluster_scale);
    s.noise = get_or(j, "noise", s.noise);
    s.hidden = get_or(j, "hidden", s.hidden);
    s.l2 = get_or(j, "l2", s.l2);
    if (j.contains("hessian")) {
        const json& h = j.at("hessian");
        check_keys(h, {"identity", "shared", "mu", "L"}, "problem");
        s.hessian_identity = get_or(h, "identity", s.hessian_identity);
        s.shared_hessian = get_or(h, "shared", s.shared_hessian);
        s.hessian_mu = get_or(h, "mu", s.hessian_mu);
        s.hessian_L = get_or(h, "L", s.hessian_L);
    }
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

PartitionSpec parse_partition(const json& j) {
    check_keys(j, {"mode", "alpha", "clients", "seed"}, "partition");
    PartitionSpec p;
    const std::string mode = get_or<std::string>(j, "mode", "dirichlet");
    if (mode == "dirichlet") {
        p.mode = PartitionSpec::Mode::dirichlet;
    } else if (mode == "identical") {
        p.mode = PartitionSpec::Mode::identical;
    } else {
        throw ConfigError("partition", "unknown mode '" + mode + "'");
    }
    p.alpha = get_or(j, "alpha", p.alpha);
    p.n_clients = get_or(j, "clients", p.n_clients);
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

std::vector<double> broadcast(const json& j, const char* list_key, const char* scalar_key, std::size_t n) {
    if (j.contains(list_key)) {
        auto v = j.at(list_key).get<std::vector<double>>();
        if (v.size() != n)
            throw ConfigError("schedule", std::string(list_key) + " needs one entry per stage");
        return v;
    }
    if (j.contains(scalar_key)) return std::vector<double>(n, j.at(scalar_key).get<double>());
    return {};
}

ScheduleConfig parse_schedule(const json& j) {
    check_keys(j, {"method", "stages", "etas", "eta", "nus", "nu", "betas", "beta", "beta1", "rounds", "total_rounds"},
               "schedule");
    ScheduleConfig sc;
    if (j.contains("method")) sc.method = preset_from_string(j.at("method").get<std::string>());

    if (j.contains("stages")) {
        for (const json& s : j.at("stages")) {
            check_keys(s, {"eta", "beta", "nu", "rounds"}, "schedule");
            if (!s.contains("rounds")) throw ConfigError("schedule", "missing stage lengths");
            Stage st;
            st.eta = s.at("eta").get<double>();
            st.beta = get_or(s, "beta", 0.0);
            st.nu = get_or(s, "nu", 0.0);
            st.rounds = s.at("rounds").get<long>();
            sc.stages.push_back(st);
        }
    } else {
        std::vector<double> etas;
        if (j.contains("etas")) {
            etas = j.at("etas").get<std::vector<double>>();
        } else if (j.contains("eta")) {
            etas = {j.at("eta").get<double>()};
        } else {
            throw ConfigError("schedule", "needs 'stages' or 'etas'");
        }
        if (etas.empty()) throw ConfigError("schedule", "no stages");
        const std::size_t S = etas.size();

        std::vector<long> rounds;
        if (j.contains("rounds")) {
            const json& r = j.at("rounds");
            rounds = r.is_array() ? r.get<std::vector<long>>() : std::vector<long>{r.get<long>()};
            if (rounds.size() != S) throw ConfigError("schedule", "rounds needs one entry per stage");
        } else if (j.contains("total_rounds")) {
            rounds = stage_lengths(etas, j.at("total_rounds").get<long>());
        } else {
            throw ConfigError("schedule", "missing stage lengths");
        }

        std::vector<double> nus = broadcast(j, "nus", "nu", S);
        std::vector<double> betas = broadcast(j, "betas", "beta", S);
        if (nus.empty() && sc.method) {
            if (*sc.method == Preset::fedsgd) nus.assign(S, 0.0);
            if (*sc.method == Preset::fedavgm) nus.assign(S, 1.0);
            if (*sc.method == Preset::fednag && !betas.empty()) nus = betas;
        }
        if (betas.empty()) {
            if (!j.contains("beta1")) throw ConfigError("schedule", "needs 'betas' or 'beta1'");
            if (nus.empty()) throw ConfigError("schedule", "solving betas needs 'nus' or a method that fixes nu");
            betas = solve_betas(etas, nus, j.at("beta1").get<double>());
        }
        if (nus.empty()) throw ConfigError("schedule", "needs 'nus' or a method that fixes nu");
        for (std::size_t s = 0; s < S; ++s) sc.stages.push_back(Stage{etas[s], betas[s], nus[s], rounds[s]});
    }
    if (sc.stages.empty()) throw ConfigError("schedule", "no stages");
    if (sc.method) {
        for (Stage& st : sc.stages) {
            const MomentumHyper h = preset(*sc.method, st.eta, st.beta, st.nu);
            st.beta = h.beta;
            st.nu = h.nu;
        }
    }
    return sc;
}

LocalSpec parse_local(const json& j) {
    check_keys(j, {"eta_l", "epochs", "steps", "batch"}, "local");
    LocalSpec l;
    l.eta_l = get_or(j, "eta_l", l.eta_l);
    if (j.contains("epochs")) l.epochs = j.at("epochs").get<int>();
    if (j.contains("steps")) l.steps = j.at("steps").get<int>();
    l.batch = get_or(j, "batch", l.batch);
    return l;
}

RegimeSpec parse_regime(const json& j, std::size_t n_clients) {
    check_keys(j, {"mode", "participation", "m", "ratio", "tau_max", "staleness", "k", "arrival"}, "regime");
    RegimeSpec r;
    const std::string mode = get_or<std::string>(j, "mode", "sync");
    const auto cohort = [&](const json& src) {
        if (src.contains("m")) return src.at("m").get<int>();
        if (src.contains("ratio"))
            return std::max(1, static_cast<int>(std::lround(src.at("ratio").get<double>() * static_cast<double>(n_clients))));
        throw ConfigError("regime", "needs 'm' or 'ratio'");
    };
    if (mode == "sync") {
        check_keys(j, {"mode", "participation"}, "regime");
        r.mode = RegimeSpec::Mode::sync;
        const json p = j.contains("participation") ? j.at("participation") : json("full");
        if (p.is_string()) {
            if (p.get<std::string>() != "full") throw ConfigError("regime", "participation must be 'full' or an object");
            r.full = true;
        } else {
            check_keys(p, {"m", "ratio"}, "regime");
            r.full = false;
            r.m = cohort(p);
        }
        return r;
    }
    if (mode != "async") throw ConfigError("regime", "unknown mode '" + mode + "'");
    check_keys(j, {"mode", "m", "ratio", "tau_max", "staleness", "k", "arrival"}, "regime");
    r.mode = RegimeSpec::Mode::async;
    r.full = false;
    r.m = cohort(j);
    if (j.contains("staleness")) {
        const json& s = j.at("staleness");
        check_keys(s, {"kind", "window", "tau"}, "regime");
        const std::string kind = s.at("kind").get<std::string>();
        if (kind == "uniform_recent") {
            r.staleness = {StalenessModel::Kind::uniform_recent, s.at("window").get<int>()};
        } else if (kind == "fixed") {
            r.staleness = {StalenessModel::Kind::fixed, s.at("tau").get<int>()};
        } else {
            throw ConfigError("regime", "unknown staleness model '" + kind + "'");
        }
    }
    if (j.contains("k")) {
        const json& k = j.at("k");
        check_keys(k, {"kind", "K", "lo", "hi"}, "regime");
        const std::string kind = k.at("kind").get<std::string>();
        KModel km;
        if (kind == "fixed") {
            km.kind = KModel::Kind::fixed;
            km.lo = km.hi = k.at("K").get<int>();
        } else if (kind == "uniform_range") {
            km.kind = KModel::Kind::uniform_range;
            km.lo = k.at("lo").get<int>();
            km.hi = k.at("hi").get<int>();
        } else {
            throw ConfigError("regime", "unknown K model '" + kind + "'");
        }
        r.k_model = km;
    }
    if (j.contains("arrival")) {
        const json& a = j.at("arrival");
        check_keys(a, {"kind", "weights", "zipf"}, "regime");
        const std::string kind = a.at("kind").get<std::string>();
        if (kind == "uniform") {
            r.arrival.kind = ArrivalModel::Kind::uniform;
        } else if (kind == "skewed") {
            r.arrival.kind = ArrivalModel::Kind::skewed;
            r.zipf = get_or(a, "zipf", 0.0);
            if (a.contains("weights")) {
                r.arrival.weights = a.at("weights").get<std::vector<double>>();
            } else {
                for (std::size_t i = 0; i < n_clients; ++i)
                    r.arrival.weights.push_back(std::pow(static_cast<double>(i + 1), -r.zipf));
            }
        } else {
            throw ConfigError("regime", "unknown arrival model '" + kind + "'");
        }
    }
    return r;
}

GridSpec parse_grid(const json& j) {
    check_keys(j, {"eta", "beta", "nu", "seed"}, "grid");
    GridSpec g;
    g.eta = get_or(j, "eta", g.eta);
    g.beta = get_or(j, "beta", g.beta);
    g.nu = get_or(j, "nu", g.nu);
    g.seed = get_or(j, "seed", g.seed);
    return g;
}

template <class F>
auto section(const json& j, const char* key, F&& parse) {
    try {
        return parse(j.contains(key) ? j.at(key) : json::object());
    } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const { return to_json(*this) == to_json(o); }

RunConfig parse_config(const json& j) {
    check_keys(j, {"name", "problem", "partition", "schedule", "local", "regime", "audit", "normalize_deltas",
                   "metrics_every", "seed", "seeds", "heterogeneity_draws", "output", "grid"},
               "config");
    RunConfig c;
    try {
        c.name = get_or(j, "name", c.name);
        c.audit = get_or(j, "audit", c.audit);
        c.normalize_deltas = get_or(j, "normalize_deltas", c.normalize_deltas);
        c.metrics_every = get_or(j, "metrics_every", c.metrics_every);
        c.seed = get_or(j, "seed", c.seed);
        c.seeds = get_or(j, "seeds", c.seeds);
        c.heterogeneity_draws = get_or(j, "heterogeneity_draws", c.heterogeneity_draws);
        c.output = get_or(j, "output", c.output);
    } catch (const json::exception& e) {
        throw ConfigError("config", e.what());
    }
    if (!j.contains("schedule")) throw ConfigError("schedule", "missing schedule");
    c.problem = section(j, "problem", parse_problem);
    c.partition = section(j, "partition", parse_partition);
    c.schedule = section(j, "schedule", parse_schedule);
    c.local = section(j, "local", parse_local);
    c.regime = section(j, "regime", [&](const json& r) { return parse_regime(r, c.partition.n_clients); });
    c.grid = section(j, "grid", parse_grid);
    validate_config(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config", e.what());
    }
    return parse_config(j);
}

json to_json(const RunConfig& c) {
    json j;
    j["name"] = c.name;
    const auto& s = c.problem.synth;
    j["problem"] = {{"kind", to_string(s.kind)},
                    {"features", s.features},
                    {"labels", s.labels},
                    {"samples_per_label", s.samples_per_label},
                    {"cluster_scale", s.cluster_scale},
                    {"noise", s.noise},
                    {"hidden", s.hidden},
                    {"l2", s.l2},
                    {"hessian",
                     {{"identity", s.hessian_identity},
                      {"shared", s.shared_hessian},
                      {"mu", s.hessian_mu},
                      {"L", s.hessian_L}}}};
    if (c.problem.seed) j["problem"]["seed"] = *c.problem.seed;
    j["partition"] = {{"mode", c.partition.mode == PartitionSpec::Mode::dirichlet ? "dirichlet" : "identical"},
                      {"alpha", c.partition.alpha},
                      {"clients", c.partition.n_clients}};
    if (c.partition.seed) j["partition"]["seed"] = *c.partition.seed;
    json stages = json::array();
    for (const Stage& st : c.schedule.stages)
        stages.push_back({{"eta", st.eta}, {"beta", st.beta}, {"nu", st.nu}, {"rounds", st.rounds}});
    j["schedule"] = {{"stages", stages}};
    if (c.schedule.method) j["schedule"]["method"] = to_string(*c.schedule.method);
    j["local"] = {{"eta_l", c.local.eta_l}, {"batch", c.local.batch}};
    if (c.local.epochs) j["local"]["epochs"] = *c.local.epochs;
    if (c.local.steps) j["local"]["steps"] = *c.local.steps;

    const auto& r = c.regime;
    if (r.mode == RegimeSpec::Mode::sync) {
        j["regime"] = {{"mode", "sync"}};
        j["regime"]["participation"] = r.full ? json("full") : json{{"m", r.m}};
    } else {
        json reg = {{"mode", "async"}, {"m", r.m}};
        reg["staleness"] = r.staleness.kind == StalenessModel::Kind::fixed
                               ? json{{"kind", "fixed"}, {"tau", r.staleness.value}}
                               : json{{"kind", "uniform_recent"}, {"window", r.staleness.value}};
        if (r.k_model) {
            reg["k"] = r.k_model->kind == KModel::Kind::fixed
                           ? json{{"kind", "fixed"}, {"K", r.k_model->lo}}
                           : json{{"kind", "uniform_range"}, {"lo", r.k_model->lo}, {"hi", r.k_model->hi}};
        }
        if (r.arrival.kind == ArrivalModel::Kind::uniform) {
            reg["arrival"] = {{"kind", "uniform"}};
        } else {
            reg["arrival"] = {{"kind", "skewed"}, {"zipf", r.zipf}, {"weights", r.arrival.weights}};
        }
        j["regime"] = reg;
    }
    j["audit"] = c.audit;
    j["normalize_deltas"] = c.normalize_deltas;
    j["metrics_every"] = c.metrics_every;
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["heterogeneity_draws"] = c.heterogeneity_draws;
    j["output"] = c.output;
    if (!c.grid.empty())
        j["grid"] = {{"eta", c.grid.eta}, {"beta", c.grid.beta}, {"nu", c.grid.nu}, {"seed", c.grid.seed}};
    return j;
}

void validate_config(const RunConfig& c) {
    const auto& s = c.problem.synth;
    if (s.features == 0 || s.labels == 0 || s.samples_per_label == 0)
        throw ConfigError("problem", "features, labels and samples_per_label must be positive");
    if (!(s.noise >= 0.0) || !(s.cluster_scale >= 0.0) || !(s.l2 >= 0.0))
        throw ConfigError("problem", "noise, cluster_scale and l2 must be non-negative");
    if (s.kind == ProblemKind::mlp && s.hidden == 0) throw ConfigError("problem", "mlp needs hidden > 0");
    if (s.kind == ProblemKind::quadratic && !s.hessian_identity && !(0.0 < s.hessian_mu && s.hessian_mu <= s.hessian_L))
        throw ConfigError("problem", "quadratic Hessian spectrum needs 0 < mu <= L");

    if (c.partition.mode == PartitionSpec::Mode::dirichlet) {
        PartitionConfig{c.partition.alpha, c.partition.n_clients, s.labels, s.samples_per_label, 0}.validate();
    } else if (c.partition.n_clients == 0) {
        throw ConfigError("partition", "needs at least one client");
    }

    const ValidationReport rep = validate(c.stage_schedule());
    if (!rep.runnable()) {
        for (const auto& v : rep.violations) {
            if (!v.rounding_only && v.constraint != "W1 constant")
                throw ConfigError("schedule", v.constraint + (v.stage ? " (stage " + std::to_string(v.stage) + ")" : "") +
                                                  ": " + v.detail);
        }
    }
    if (c.audit && rep.has("W1 constant"))
        throw ConfigError("audit", "the Lyapunov audit needs a schedule with constant eta*beta*nu/(1-beta)");

    if (c.local.epochs.has_value() == c.local.steps.has_value())
        throw ConfigError("local", "set exactly one of 'epochs' and 'steps'");
    if (c.local.epochs && *c.local.epochs < 1) throw ConfigError("local", "epochs must be >= 1");
    LocalConfig{c.local.eta_l, c.local.steps.value_or(1), MinibatchSpec{c.local.batch}}.validate();

    const int n = static_cast<int>(c.partition.n_clients);
    if (c.regime.mode == RegimeSpec::Mode::sync) {
        if (!c.regime.full && (c.regime.m < 1 || c.regime.m > n))
            throw ConfigError("participation", "cohort size must lie in [1, n]");
    } else {
        AsyncConfig a;
        a.m = c.regime.m;
        a.staleness = c.regime.staleness;
        if (c.regime.k_model) a.k_model = *c.regime.k_model;
        a.arrival = c.regime.arrival;
        a.validate(n);
    }
    if (c.metrics_every < 1) throw ConfigError("config", "metrics_every must be >= 1");
    if (c.heterogeneity_draws < 0) throw ConfigError("config", "heterogeneity_draws must be >= 0");

    const bool varies_hyper = !c.grid.eta.empty() || !c.grid.beta.empty() || !c.grid.nu.empty();
    if (varies_hyper && c.schedule.stages.size() != 1)
        throw ConfigError("grid", "eta/beta/nu grids need a single-stage schedule");
    if (!c.grid.nu.empty() && c.schedule.method && *c.schedule.method != Preset::qhm)
        throw ConfigError("grid", "method " + to_string(*c.schedule.method) + " fixes nu");
}

std::vector<RunConfig> expand_grid(const RunConfig& cfg) {
    const Stage base = cfg.schedule.stages.front();
    const auto or_single = [](const std::vector<double>& v, double fallback) {
        return v.empty() ? std::vector<double>{fallback} : v;
    };
    const std::vector<double> etas = or_single(cfg.grid.eta, base.eta);
    const std::vector<double> betas = or_single(cfg.grid.beta, base.beta);
    const std::vector<double> nus = or_single(cfg.grid.nu, base.nu);
    std::vector<std::uint64_t> seeds = cfg.grid.seed;
    if (seeds.empty()) seeds = cfg.seeds;
    const bool seed_axis = !seeds.empty();
    if (!seed_axis) seeds = {cfg.seed};

    std::vector<RunConfig> out;
    std::set<std::string> names;
    for (double eta : etas) {
        for (double beta : betas) {
            for (double nu : nus) {
                for (std::uint64_t seed : seeds) {
                    RunConfig m = cfg;
                    m.grid = {};
                    m.seeds = {};
                    m.seed = seed;
                    std::string suffix;
                    if (!cfg.grid.eta.empty() || !cfg.grid.beta.empty() || !cfg.grid.nu.empty()) {
                        Stage& st = m.schedule.stages.front();
                        st.eta = eta;
                        st.beta = beta;
                        st.nu = nu;
                        if (m.schedule.method) {
                            const MomentumHyper h = preset(*m.schedule.method, eta, beta, nu);
                            st.nu = h.nu;
                        }
                        if (!cfg.grid.eta.empty()) suffix += "_eta" + format_number(eta);
                        if (!cfg.grid.beta.empty()) suffix += "_beta" + format_number(beta);
                        if (!cfg.grid.nu.empty()) suffix += "_nu" + format_number(nu);
                    }
                    if (seed_axis) suffix += "_seed" + std::to_string(seed);
                    if (!suffix.empty()) {
                        m.name = cfg.name + suffix;
                        m.output = cfg.output + "/" + suffix.substr(1);
                    }
                    if (!names.insert(m.name).second) throw ConfigError("grid", "duplicate grid member " + m.name);
                    validate_config(m);
                    out.push_back(std::move(m));
                }
            }
        }
    }
    return out;
}

}  // namespace fedgm
