#include "pushpomdp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace pushpomdp {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace {

/// Reads optional keys from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config section '" + path_ + "' must be an object");
        }
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config field '" + field(key) + "': " + e.what());
        }
    }

    void get_path(const std::string& key, fs::path& out) {
        std::string s = out.string();
        get(key, s);
        out = s;
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) {
                throw ConfigError("unknown config field '" + field(item.key()) + "'");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
void checked(const std::string& what, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config '" + what + "': " + e.what());
    }
}

void parse_simulator(const json& j, HarnessConfig& cfg) {
    Section s(j, "simulator");
    s.get("limit_surface_c", cfg.sim.limit_surface_c);
    s.get("substeps", cfg.sim.substeps);
    if (const json* n = s.child("noise")) {
        Section ns(*n, "simulator.noise");
        ns.get("sigma_pos", cfg.noise.sigma_pos);
        ns.get("sigma_yaw", cfg.noise.sigma_yaw);
        ns.finish();
    }
    if (const json* b = s.child("block")) {
        Section bs(*b, "simulator.block");
        std::array<double, 2> he{cfg.block.half_extents.x, cfg.block.half_extents.y};
        bs.get("half_extents", he);
        cfg.block.half_extents = {he[0], he[1]};
        bs.get("height", cfg.block.height);
        bs.get("mass", cfg.block.mass);
        bs.finish();
    }
    s.finish();
    checked("simulator", [&] { cfg.sim.validate(); });
    checked("simulator.noise", [&] { cfg.noise.validate(); });
    checked("simulator.block", [&] { cfg.block.validate(); });
}

void parse_scenarios(const json& j, HarnessConfig& cfg) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError("config field 'scenarios' must be a non-empty array");
    }
    cfg.scenarios.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string where = "scenarios[" + std::to_string(i) + "]";
        const json& item = j[i];
        try {
            if (item.is_string()) {
                const std::string s = item.get<std::string>();
                if (s.size() > 5 && s.substr(s.size() - 5) == ".json") {
                    const fs::path p = cfg.resolve(s);
                    std::ifstream is(p);
                    if (!is) {
                        throw ConfigError("config '" + where + "': cannot open scenario file " + p.string());
                    }
                    cfg.scenarios.push_back(scenario_from_json(json::parse(is)));
                } else {
                    cfg.scenarios.push_back(builtin_scenario(s));
                }
            } else {
                cfg.scenarios.push_back(scenario_from_json(item));
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config '" + where + "': " + e.what());
        } catch (const json::exception& e) {
            throw ConfigError("config '" + where + "': " + e.what());
        }
    }
}

void parse_pnp(const json& j, HarnessConfig& cfg) {
    Section s(j, "pnp");
    s.get("latent_dim", cfg.pnp.latent_dim);
    s.get("embed_dim", cfg.pnp.embed_dim);
    s.get("attention_layers", cfg.pnp.attention_layers);
    s.get("heads", cfg.pnp.heads);
    s.get("ffn_dim", cfg.pnp.ffn_dim);
    s.get("decoder_hidden", cfg.pnp.decoder_hidden);
    s.get("position_scale", cfg.pnp.position_scale);
    s.get("travel_scale", cfg.pnp.travel_scale);
    s.get("history_cap", cfg.pnp.history_cap);
    std::string policy = cfg.pnp.cap_policy == HistoryCapPolicy::keep_first ? "keep_first" : "drop_oldest";
    s.get("cap_policy", policy);
    if (policy == "keep_first") {
        cfg.pnp.cap_policy = HistoryCapPolicy::keep_first;
    } else if (policy == "drop_oldest") {
        cfg.pnp.cap_policy = HistoryCapPolicy::drop_oldest;
    } else {
        throw ConfigError("config field 'pnp.cap_policy': expected keep_first or drop_oldest");
    }
    s.get_path("checkpoint", cfg.checkpoint);
    if (const json* d = s.child("data")) {
        Section ds(*d, "pnp.data");
        ds.get("blocks", cfg.data.blocks);
        ds.get("pushes", cfg.data.pushes);
        ds.get("holdout_blocks", cfg.data.holdout_blocks);
        ds.get("test_blocks", cfg.data.test_blocks);
        ds.get_path("path", cfg.data.path);
        ds.get_path("holdout_path", cfg.data.holdout_path);
        ds.get_path("test_path", cfg.data.test_path);
        ds.finish();
    }
    if (const json* t = s.child("train")) {
        Section ts(*t, "pnp.train");
        ts.get("epochs", cfg.train.epochs);
        ts.get("batch", cfg.train.batch);
        ts.get("lr", cfg.train.lr);
        ts.get("min_lr", cfg.train.min_lr);
        ts.get("weight_decay", cfg.train.weight_decay);
        ts.get("seed", cfg.train.seed);
        ts.get("augment", cfg.train.augment);
        ts.get("max_context", cfg.train.max_context);
        ts.get("holdout_context", cfg.train.holdout_context);
        ts.get_path("loss_csv", cfg.loss_csv);
        ts.finish();
    }
    s.finish();
    if (cfg.data.pushes == 0) {
        throw ConfigError("config field 'pnp.data.pushes' must be positive");
    }
    if (cfg.train.epochs == 0 || cfg.train.batch == 0) {
        throw ConfigError("config fields 'pnp.train.epochs' and 'pnp.train.batch' must be positive");
    }
    if (!(cfg.train.lr > 0.0) || cfg.train.min_lr < 0.0 || cfg.train.min_lr > cfg.train.lr) {
        throw ConfigError("config fields 'pnp.train.lr' / 'min_lr' need 0 <= min_lr <= lr, lr > 0");
    }
    if (!(cfg.train.weight_decay >= 0.0)) {
        throw ConfigError("config field 'pnp.train.weight_decay' must be >= 0");
    }
}

void parse_planner(const json& j, HarnessConfig& cfg) {
    Section s(j, "planner");
    s.get("depth", cfg.planner.depth);
    s.get("gamma", cfg.planner.gamma);
    s.get("alpha_obs", cfg.planner.alpha_obs);
    s.get("k_action", cfg.planner.k_action);
    s.get("alpha_action", cfg.planner.alpha_action);
    s.get("ucb_c", cfg.planner.ucb_c);
    s.get("speed", cfg.planner.speed);
    s.get("travel", cfg.planner.travel);
    s.get("audit", cfg.planner.audit);
    if (const json* o = s.child("obs_model")) {
        Section os(*o, "planner.obs_model");
        os.get("sigma_pos", cfg.obs.sigma_pos);
        os.get("sigma_yaw", cfg.obs.sigma_yaw);
        os.finish();
    }
    s.finish();
    checked("planner", [&] { cfg.planner.validate(); });
    checked("planner.obs_model", [&] { cfg.obs.validate(); });
}

void parse_experiment(const json& j, HarnessConfig& cfg) {
    auto& e = cfg.experiment;
    Section s(j, "experiment");
    s.get("planners", e.planners);
    s.get("budgets", e.budgets);
    std::string mode = "seconds";
    s.get("budget_mode", mode);
    if (mode == "seconds") {
        e.budget_mode = BudgetMode::seconds;
    } else if (mode == "iterations") {
        e.budget_mode = BudgetMode::iterations;
    } else if (mode == "calibrated") {
        e.budget_mode = BudgetMode::calibrated;
    } else {
        throw ConfigError("config field 'experiment.budget_mode': expected seconds, iterations or calibrated");
    }
    s.get("iterations_per_second", e.iterations_per_second);
    s.get("calibration_seconds", e.calibration_seconds);
    s.get("trials", e.trials);
    s.get("max_steps", e.max_steps);
    s.get("plans_per_cell", e.plans_per_cell);
    s.get("count_budgets", e.count_budgets);
    s.get("context_max", e.context_max);
    s.get("seed", e.seed);
    s.get("workers", e.workers);
    s.get_path("results_csv", e.results_csv);
    s.get_path("count_csv", e.count_csv);
    s.get_path("context_csv", e.context_csv);
    s.get_path("trace_path", e.trace_path);
    s.get("episode_scenario", e.episode_scenario);
    s.get("episode_planner", e.episode_planner);
    s.get("episode_budget", e.episode_budget);
    s.finish();
    if (e.trials == 0) {
        throw ConfigError("config field 'experiment.trials' must be >= 1");
    }
    if (e.max_steps < 1) {
        throw ConfigError("config field 'experiment.max_steps' must be >= 1");
    }
    if (e.plans_per_cell == 0) {
        throw ConfigError("config field 'experiment.plans_per_cell' must be >= 1");
    }
    if (e.planners.empty()) {
        throw ConfigError("config field 'experiment.planners' must not be empty");
    }
    for (const auto& p : e.planners) {
        try {
            PlannerSpec::parse(p);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("config field 'experiment.planners': " + std::string(ex.what()));
        }
    }
    for (double b : e.budgets) {
        if (!(b >= 0.0) || !std::isfinite(b)) {
            throw ConfigError("config field 'experiment.budgets': budgets must be finite and >= 0");
        }
    }
    for (double b : e.count_budgets) {
        if (!(b >= 0.0) || !std::isfinite(b)) {
            throw ConfigError("config field 'experiment.count_budgets': budgets must be finite and >= 0");
        }
    }
    for (const auto& [name, ips] : e.iterations_per_second) {
        if (!(ips > 0.0) || !std::isfinite(ips)) {
            throw ConfigError("config field 'experiment.iterations_per_second." + name + "' must be positive");
        }
    }
    if (!(e.calibration_seconds > 0.0)) {
        throw ConfigError("config field 'experiment.calibration_seconds' must be positive");
    }
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                fn(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

std::ofstream open_output(const fs::path& p) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream os(p, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + p.string() + " for writing");
    }
    return os;
}

void close_output(std::ofstream& os, const fs::path& p) {
    os.close();
    if (!os) {
        throw std::runtime_error("failed writing " + p.string());
    }
}

std::pair<double, double> mean_se(const std::vector<double>& v) {
    if (v.empty()) {
        return {std::nan(""), std::nan("")};
    }
    double m = 0.0;
    for (double x : v) {
        m += x;
    }
    m /= static_cast<double>(v.size());
    if (v.size() < 2) {
        return {m, 0.0};
    }
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()))};
}

std::string fmt_opt(double v) {
    return std::isfinite(v) ? format_double(v) : "";
}

}  // namespace

const Scenario& HarnessConfig::scenario(const std::string& name) const {
    for (const auto& s : scenarios) {
        if (s.name == name) {
            return s;
        }
    }
    throw ConfigError("scenario '" + name + "' is not listed in the config");
}

fs::path HarnessConfig::resolve(const fs::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
}

HarnessConfig parse_config(const json& j, const fs::path& base_dir) {
    HarnessConfig cfg;
    cfg.base_dir = base_dir;
    cfg.scenarios = builtin_scenarios();
    Section top(j, "");
    if (const json* s = top.child("simulator")) {
        parse_simulator(*s, cfg);
    }
    if (const json* s = top.child("scenarios")) {
        parse_scenarios(*s, cfg);
    }
    if (const json* s = top.child("pnp")) {
        parse_pnp(*s, cfg);
    }
    if (const json* s = top.child("planner")) {
        parse_planner(*s, cfg);
    }
    if (const json* s = top.child("experiment")) {
        parse_experiment(*s, cfg);
    }
    top.finish();
    cfg.pnp.observable = observable_features(cfg.block);
    checked("pnp", [&] { cfg.pnp.validate(); });
    return cfg;
}

HarnessConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::size_t resolve_workers(const HarnessConfig& cfg) {
    if (const char* env = std::getenv("PUSHPOMDP_WORKERS")) {
        std::size_t n = 0;
        const std::string s(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec != std::errc() || ptr != s.data() + s.size() || n == 0) {
            throw ConfigError("PUSHPOMDP_WORKERS must be a positive integer, got '" + s + "'");
        }
        return n;
    }
    return std::max<std::size_t>(1, cfg.experiment.workers);
}

PlannerSpec PlannerSpec::parse(const std::string& name) {
    PlannerSpec p;
    p.name = name;
    if (name == "NPT") {
        p.kind = Kind::npt;
    } else if (name == "RANDOM") {
        p.kind = Kind::random;
    } else if (name == "WAYPOINT") {
        p.kind = Kind::waypoint;
    } else if (name.rfind("PFT", 0) == 0 && name.size() > 3) {
        p.kind = Kind::pft;
        const auto [ptr, ec] = std::from_chars(name.data() + 3, name.data() + name.size(), p.particles);
        if (ec != std::errc() || ptr != name.data() + name.size() || p.particles == 0) {
            throw std::invalid_argument("bad particle count in planner '" + name + "'");
        }
    } else {
        throw std::invalid_argument("unknown planner '" + name + "' (expected NPT, PFT<n>, RANDOM or WAYPOINT)");
    }
    return p;
}

PftModel HarnessContext::pft_model() const {
    return PftModel{cfg.block, cfg.obs, cfg.noise, cfg.sim};
}

Budget HarnessContext::budget_for(const PlannerSpec& planner, double seconds) const {
    if (cfg.experiment.budget_mode == BudgetMode::seconds) {
        return Budget::wall(seconds);
    }
    const auto it = throughput.find(planner.name);
    if (it == throughput.end()) {
        throw ConfigError("no iterations_per_second entry for planner '" + planner.name + "'");
    }
    return Budget::iters(static_cast<std::size_t>(std::max(1.0, std::round(it->second * seconds))));
}

std::unique_ptr<Policy> HarnessContext::make_policy(const PlannerSpec& planner, double seconds) const {
    PlannerConfig pc = cfg.planner;
    switch (planner.kind) {
        case PlannerSpec::Kind::npt:
            if (!model) {
                throw ConfigError("NPT planner needs a loaded checkpoint");
            }
            pc.budget = budget_for(planner, seconds);
            return std::make_unique<NptPolicy>(model, pc);
        case PlannerSpec::Kind::pft:
            pc.budget = budget_for(planner, seconds);
            return std::make_unique<PftPolicy>(planner.particles, pft_model(), pc);
        case PlannerSpec::Kind::random:
            return std::make_unique<RandomPolicy>(pc.speed, pc.travel);
        case PlannerSpec::Kind::waypoint:
            return std::make_unique<WaypointPolicy>(0.12, pc.speed, pc.travel);
    }
    throw std::logic_error("unhandled planner kind");
}

double measure_throughput(const HarnessContext& ctx, const PlannerSpec& planner, double seconds, std::uint64_t seed) {
    const Scenario& sc = ctx.cfg.scenarios.front();
    PlannerConfig pc = ctx.cfg.planner;
    pc.budget = Budget::wall(seconds);
    Rng rng(seed);
    PlanResult r;
    if (planner.kind == PlannerSpec::Kind::npt) {
        if (!ctx.model) {
            throw ConfigError("NPT planner needs a loaded checkpoint");
        }
        r = plan_npt(*ctx.model, sc, sc.start,
                     History(ctx.model->config().history_cap, ctx.model->config().cap_policy), pc, rng);
    } else if (planner.kind == PlannerSpec::Kind::pft) {
        const ParticleBelief b = init_prior(planner.particles, ctx.cfg.block, rng, sc.start);
        r = plan_pft(ctx.pft_model(), sc, b, pc, rng);
    } else {
        return 0.0;
    }
    if (r.iterations == 0 || r.wall_seconds <= 0.0) {
        throw std::runtime_error("throughput measurement for " + planner.name + " completed no iterations");
    }
    return static_cast<double>(r.iterations) / r.wall_seconds;
}

HarnessContext make_context(const HarnessConfig& cfg, const std::vector<std::string>& planners) {
    HarnessContext ctx;
    ctx.cfg = cfg;
    std::vector<PlannerSpec> specs;
    for (const auto& p : planners) {
        try {
            specs.push_back(PlannerSpec::parse(p));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    const bool need_model =
        std::any_of(specs.begin(), specs.end(), [](const PlannerSpec& s) { return s.kind == PlannerSpec::Kind::npt; });
    if (need_model) {
        const fs::path ckpt = cfg.resolve(cfg.checkpoint);
        if (!fs::exists(ckpt)) {
            throw ConfigError("checkpoint " + ckpt.string() + " does not exist (run train first)");
        }
        const PnpModel m = load_checkpoint(ckpt);
        ctx.model = std::make_shared<const PnpInference>(m);
    }
    if (cfg.experiment.budget_mode == BudgetMode::iterations) {
        ctx.throughput = cfg.experiment.iterations_per_second;
    } else if (cfg.experiment.budget_mode == BudgetMode::calibrated) {
        // Interleaved rounds with a median per planner, so a slow patch on a shared machine
        // does not skew one planner's rate against the others.
        constexpr int kRounds = 5;
        std::map<std::string, std::vector<double>> samples;
        for (int round = 0; round < kRounds; ++round) {
            for (const auto& s : specs) {
                if (s.searches()) {
                    samples[s.name].push_back(measure_throughput(ctx, s, cfg.experiment.calibration_seconds / kRounds,
                                                                 splitmix64(cfg.experiment.seed + round)));
                }
            }
        }
        for (auto& [name, v] : samples) {
            std::sort(v.begin(), v.end());
            ctx.throughput[name] = v[v.size() / 2];
        }
    }
    return ctx;
}

ResultRow run_trial(const HarnessContext& ctx, const Scenario& scenario, const PlannerSpec& planner,
                    double budget_seconds, std::size_t trial, std::uint64_t base_seed, EpisodeResult* episode) {
    ResultRow row;
    row.scenario = scenario.name;
    row.planner = planner.name;
    row.budget_seconds = budget_seconds;
    row.trial = trial;
    row.seed = base_seed ^ static_cast<std::uint64_t>(trial);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (planner.searches()) {
            const Budget b = ctx.budget_for(planner, budget_seconds);
            row.budget_iterations = b.kind == Budget::Kind::iterations ? b.iterations : 0;
        }
        // The COM depends on the trial seed only, so every planner faces the same blocks.
        Rng com_rng(splitmix64(row.seed));
        row.com = sample_com_uniform(ctx.cfg.block, com_rng);
        Rng episode_rng(splitmix64(row.seed ^ 0x5DEECE66DULL));
        auto policy = ctx.make_policy(planner, budget_seconds);
        EpisodeOptions opts;
        opts.max_steps = ctx.cfg.experiment.max_steps;
        opts.noise = ctx.cfg.noise;
        opts.sim = ctx.cfg.sim;
        EpisodeResult res = run_episode(*policy, scenario, ctx.cfg.block.with_com(row.com), episode_rng, opts);
        row.progress_percent = res.progress_percent;
        row.terminal = to_string(res.terminal);
        row.steps = res.steps.size();
        row.simulate_calls = res.simulate_calls;
        row.discounted_return = res.discounted_return(ctx.cfg.planner.gamma);
        if (episode != nullptr) {
            *episode = std::move(res);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        row.error = e.what();
        row.terminal = "error";
        row.progress_percent = std::nan("");
        row.discounted_return = std::nan("");
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

std::vector<ResultRow> run_bench(const HarnessContext& ctx, std::uint64_t base_seed, std::size_t workers) {
    const auto& e = ctx.cfg.experiment;
    struct Job {
        const Scenario* scenario;
        PlannerSpec planner;
        double budget;
        std::size_t trial;
    };
    std::vector<Job> jobs;
    for (const auto& sc : ctx.cfg.scenarios) {
        for (const auto& p : e.planners) {
            const PlannerSpec spec = PlannerSpec::parse(p);
            for (double b : e.budgets) {
                for (std::size_t t = 0; t < e.trials; ++t) {
                    jobs.push_back({&sc, spec, b, t});
                }
            }
        }
    }
    std::vector<ResultRow> rows(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const Job& j = jobs[i];
        rows[i] = run_trial(ctx, *j.scenario, j.planner, j.budget, j.trial, base_seed);
        if (!rows[i].error.empty()) {
            std::cerr << "trial failed: " << j.scenario->name << " " << j.planner.name << " budget " << j.budget
                      << " trial " << j.trial << ": " << rows[i].error << "\n";
        }
    });
    return rows;
}

std::vector<CountRow> run_count_sims(const HarnessContext& ctx, std::uint64_t base_seed) {
    const auto& e = ctx.cfg.experiment;
    const Scenario& sc = ctx.cfg.scenarios.front();
    std::vector<CountRow> out;
    for (const auto& name : e.planners) {
        const PlannerSpec spec = PlannerSpec::parse(name);
        if (!spec.searches()) {
            continue;
        }
        for (double b : e.count_budgets) {
            CountRow row;
            row.planner = name;
            row.budget_seconds = b;
            PlannerConfig pc = ctx.cfg.planner;
            pc.budget = ctx.budget_for(spec, b);
            row.budget_iterations = pc.budget.kind == Budget::Kind::iterations ? pc.budget.iterations : 0;
            std::vector<double> calls;
            for (std::size_t p = 0; p < e.plans_per_cell; ++p) {
                Rng rng(splitmix64(base_seed ^ static_cast<std::uint64_t>(p)));
                PlanResult r;
                if (spec.kind == PlannerSpec::Kind::npt) {
                    if (!ctx.model) {
                        throw ConfigError("NPT planner needs a loaded checkpoint");
                    }
                    r = plan_npt(*ctx.model, sc, sc.start,
                                 History(ctx.model->config().history_cap, ctx.model->config().cap_policy), pc, rng);
                } else {
                    const ParticleBelief belief = init_prior(spec.particles, ctx.cfg.block, rng, sc.start);
                    r = plan_pft(ctx.pft_model(), sc, belief, pc, rng);
                }
                row.per_plan.push_back(r.simulate_calls);
                calls.push_back(static_cast<double>(r.simulate_calls));
            }
            row.plans = calls.size();
            std::tie(row.mean_simulate_calls, row.std_error) = mean_se(calls);
            out.push_back(std::move(row));
        }
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& os) {
    os << "scenario,planner,budget_seconds,budget_iterations,trial,seed,com_x,com_y,progress_percent,terminal,steps,"
          "simulate_calls,discounted_return,error\r\n";
    for (const auto& r : rows) {
        os << csv_field(r.scenario) << ',' << csv_field(r.planner) << ',' << format_double(r.budget_seconds) << ','
           << r.budget_iterations << ',' << r.trial << ',' << r.seed << ',' << format_double(r.com.x) << ','
           << format_double(r.com.y) << ',' << fmt_opt(r.progress_percent) << ',' << csv_field(r.terminal) << ','
           << r.steps << ',' << r.simulate_calls << ',' << fmt_opt(r.discounted_return) << ',' << csv_field(r.error)
           << "\r\n";
    }
}

void write_timing_csv(const std::vector<ResultRow>& rows, std::ostream& os) {
    os << "scenario,planner,budget_seconds,trial,wall_seconds\r\n";
    for (const auto& r : rows) {
        os << csv_field(r.scenario) << ',' << csv_field(r.planner) << ',' << format_double(r.budget_seconds) << ','
           << r.trial << ',' << format_double(r.wall_seconds) << "\r\n";
    }
}

void write_count_csv(const std::vector<CountRow>& rows, std::ostream& os) {
    os << "planner,budget_seconds,budget_iterations,plans,mean_simulate_calls,std_error\r\n";
    for (const auto& r : rows) {
        os << csv_field(r.planner) << ',' << format_double(r.budget_seconds) << ',' << r.budget_iterations << ','
           << r.plans << ',' << format_double(r.mean_simulate_calls) << ',' << format_double(r.std_error) << "\r\n";
    }
}

void write_loss_csv(const TrainResult& result, std::ostream& os) {
    os << "epoch,elbo_loss,holdout_loglik\r\n";
    for (const auto& e : result.curve) {
        os << e.epoch << ',' << format_double(e.elbo_loss) << ',' << fmt_opt(e.holdout_loglik) << "\r\n";
    }
}

void write_context_csv(const std::vector<ContextPoint>& curve, std::ostream& os) {
    os << "context,mean_error,std_error,blocks\r\n";
    for (const auto& p : curve) {
        os << p.context << ',' << format_double(p.mean_error) << ',' << format_double(p.std_error) << ',' << p.blocks
           << "\r\n";
    }
}

json episode_trace(const EpisodeResult& episode, const Scenario& scenario, const std::string& planner,
                   std::uint64_t seed) {
    json steps = json::array();
    for (std::size_t i = 0; i < episode.steps.size(); ++i) {
        const auto& s = episode.steps[i];
        steps.push_back({{"step", i},
                         {"action", {{"theta", s.action.theta}, {"speed", s.action.speed}, {"travel", s.action.travel}}},
                         {"pose", {s.outcome.x, s.outcome.y, s.outcome.yaw}},
                         {"reward", s.reward},
                         {"fallen", s.fallen},
                         {"reached", s.reached}});
    }
    return {{"scenario", scenario_to_json(scenario)},
            {"planner", planner},
            {"seed", seed},
            {"com", {episode.com.x, episode.com.y}},
            {"start", {episode.start.x, episode.start.y, episode.start.yaw}},
            {"steps", steps},
            {"progress_percent", episode.progress_percent},
            {"terminal", to_string(episode.terminal)},
            {"simulate_calls", episode.simulate_calls}};
}

int cmd_gen_data(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    const std::uint64_t seed = opt.seed.value_or(cfg.experiment.seed);
    const fs::path out = opt.out ? *opt.out : cfg.resolve(cfg.data.path);
    const auto write = [&](std::size_t blocks, const fs::path& path, std::uint64_t s) {
        Rng rng(s);
        const PushDataset ds = gen_dataset(blocks, cfg.data.pushes, cfg.block, cfg.noise, cfg.sim, rng,
                                           cfg.planner.speed, cfg.planner.travel);
        auto os = open_output(path);
        write_dataset_jsonl(ds, os);
        close_output(os, path);
        log << "wrote " << ds.record_count() << " records (" << blocks << " blocks) to " << path.string() << "\n";
    };
    write(cfg.data.blocks, out, seed);
    if (cfg.data.holdout_blocks > 0) {
        write(cfg.data.holdout_blocks, cfg.resolve(cfg.data.holdout_path), splitmix64(seed ^ 1));
    }
    if (cfg.data.test_blocks > 0) {
        write(cfg.data.test_blocks, cfg.resolve(cfg.data.test_path), splitmix64(seed ^ 2));
    }
    return 0;
}

int cmd_train(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    const fs::path data = cfg.resolve(cfg.data.path);
    if (!fs::exists(data)) {
        throw ConfigError("dataset " + data.string() + " does not exist (run gen-data first)");
    }
    const PushDataset ds = read_dataset_jsonl(data);
    std::optional<PushDataset> holdout;
    const fs::path hp = cfg.resolve(cfg.data.holdout_path);
    if (cfg.data.holdout_blocks > 0 && fs::exists(hp)) {
        holdout = read_dataset_jsonl(hp);
    }
    TrainConfig tc = cfg.train;
    if (opt.seed) {
        tc.seed = *opt.seed;
    }
    PnpModel model(cfg.pnp, splitmix64(tc.seed));
    log << "training on " << ds.record_count() << " records, " << model.parameter_count() << " parameters\n";
    const TrainResult res = train(model, ds, tc, holdout ? &*holdout : nullptr, cfg.block);
    const fs::path ckpt = opt.out ? *opt.out : cfg.resolve(cfg.checkpoint);
    if (ckpt.has_parent_path()) {
        fs::create_directories(ckpt.parent_path());
    }
    save_checkpoint(model, ckpt);
    fs::path loss = cfg.loss_csv.empty() ? ckpt.parent_path() / (ckpt.stem().string() + "_loss.csv")
                                         : cfg.resolve(cfg.loss_csv);
    auto os = open_output(loss);
    write_loss_csv(res, os);
    close_output(os, loss);
    const auto& last = res.curve.back();
    log << "final epoch " << last.epoch << ": elbo_loss " << last.elbo_loss << ", holdout_loglik "
        << last.holdout_loglik << "\n";
    log << "checkpoint " << ckpt.string() << ", loss curve " << loss.string() << "\n";
    return 0;
}

int cmd_bench(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    const HarnessContext ctx = make_context(cfg, cfg.experiment.planners);
    const std::uint64_t seed = opt.seed.value_or(cfg.experiment.seed);
    const auto rows = run_bench(ctx, seed, resolve_workers(cfg));
    const fs::path out = opt.out ? *opt.out : cfg.resolve(cfg.experiment.results_csv);
    auto os = open_output(out);
    write_results_csv(rows, os);
    close_output(os, out);
    // Wall times are kept apart so the results file is reproducible in iteration mode.
    const fs::path timing = out.parent_path() / (out.stem().string() + "_timing.csv");
    auto ts = open_output(timing);
    write_timing_csv(rows, ts);
    close_output(ts, timing);

    std::map<std::tuple<std::string, std::string, double>, std::vector<double>> cells;
    std::vector<std::tuple<std::string, std::string, double>> order;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.scenario, r.planner, r.budget_seconds);
        if (!cells.count(key)) {
            order.push_back(key);
        }
        auto& v = cells[key];
        if (r.error.empty()) {
            v.push_back(r.progress_percent);
        }
    }
    for (const auto& key : order) {
        const auto [m, se] = mean_se(cells[key]);
        log << std::get<0>(key) << " " << std::get<1>(key) << " " << std::get<2>(key) << "s: progress " << m
            << " +/- " << se << " (n=" << cells[key].size() << ")\n";
    }
    log << "wrote " << rows.size() << " rows to " << out.string() << "\n";
    return 0;
}

int cmd_count_sims(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    const HarnessContext ctx = make_context(cfg, cfg.experiment.planners);
    const auto rows = run_count_sims(ctx, opt.seed.value_or(cfg.experiment.seed));
    const fs::path out = opt.out ? *opt.out : cfg.resolve(cfg.experiment.count_csv);
    auto os = open_output(out);
    write_count_csv(rows, os);
    close_output(os, out);
    for (const auto& r : rows) {
        log << r.planner << " " << r.budget_seconds << "s: " << r.mean_simulate_calls << " +/- " << r.std_error
            << " simulate calls\n";
    }
    return 0;
}

int cmd_eval_context(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    const fs::path ckpt = cfg.resolve(cfg.checkpoint);
    const fs::path test = cfg.resolve(cfg.data.test_path);
    if (!fs::exists(ckpt)) {
        throw ConfigError("checkpoint " + ckpt.string() + " does not exist (run train first)");
    }
    if (!fs::exists(test)) {
        throw ConfigError("test dataset " + test.string() + " does not exist (run gen-data first)");
    }
    const PnpModel model = load_checkpoint(ckpt);
    const auto curve = eval_context_curve(model, read_dataset_jsonl(test), cfg.experiment.context_max);
    const fs::path out = opt.out ? *opt.out : cfg.resolve(cfg.experiment.context_csv);
    auto os = open_output(out);
    write_context_csv(curve, os);
    close_output(os, out);
    log << "error(0) " << curve.front().mean_error << ", error(" << curve.back().context << ") "
        << curve.back().mean_error << ", ratio " << curve.back().mean_error / curve.front().mean_error << " over "
        << curve.front().blocks << " blocks\n";
    return 0;
}

int cmd_plan_episode(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log) {
    const std::string planner_name = opt.planner.value_or(cfg.experiment.episode_planner);
    const PlannerSpec spec = [&] {
        try {
            return PlannerSpec::parse(planner_name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }();
    const Scenario& sc = cfg.scenario(opt.scenario.value_or(cfg.experiment.episode_scenario));
    const HarnessContext ctx = make_context(cfg, {planner_name});
    const std::uint64_t seed = opt.seed.value_or(cfg.experiment.seed);
    EpisodeResult ep;
    const ResultRow row = run_trial(ctx, sc, spec, cfg.experiment.episode_budget, 0, seed, &ep);
    if (!row.error.empty()) {
        throw std::runtime_error("episode failed: " + row.error);
    }
    const fs::path out = opt.out ? *opt.out : cfg.resolve(cfg.experiment.trace_path);
    auto os = open_output(out);
    os << episode_trace(ep, sc, planner_name, row.seed).dump(2) << "\n";
    close_output(os, out);
    log << sc.name << " " << planner_name << ": " << row.steps << " steps, " << row.terminal << ", progress "
        << row.progress_percent << "%, trace " << out.string() << "\n";
    return 0;
}

int run_command(const std::string& command, const fs::path& config_path, const CommandOptions& opt, std::ostream& log,
                std::ostream& err) {
    try {
        const HarnessConfig cfg = load_config(config_path);
        if (command == "gen-data") {
            return cmd_gen_data(cfg, opt, log);
        }
        if (command == "train") {
            return cmd_train(cfg, opt, log);
        }
        if (command == "bench") {
            return cmd_bench(cfg, opt, log);
        }
        if (command == "count-sims") {
            return cmd_count_sims(cfg, opt, log);
        }
        if (command == "eval-context") {
            return cmd_eval_context(cfg, opt, log);
        }
        if (command == "plan-episode") {
            return cmd_plan_episode(cfg, opt, log);
        }
        err << "error: unknown command '" << command << "'\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace pushpomdp
