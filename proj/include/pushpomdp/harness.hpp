#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pushpomdp/env.hpp"
#include "pushpomdp/particle_belief.hpp"
#include "pushpomdp/planner.hpp"
#include "pushpomdp/pnp.hpp"
#include "pushpomdp/pnp_inference.hpp"

namespace pushpomdp {

/// Invalid or inconsistent configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t splitmix64(std::uint64_t x);

struct DataConfig {
    std::size_t blocks = 500;
    std::size_t pushes = 20;
    std::size_t holdout_blocks = 50;
    std::size_t test_blocks = 300;
    std::filesystem::path path = "data/train.jsonl";
    std::filesystem::path holdout_path = "data/holdout.jsonl";
    std::filesystem::path test_path = "data/test.jsonl";
};

enum class BudgetMode {
    /// Wall-clock seconds, as listed.
    seconds,
    /// Seconds converted through a fixed iterations-per-second table from the config.
    iterations,
    /// Seconds converted through a throughput measurement taken at startup.
    calibrated,
};

struct ExperimentConfig {
    std::vector<std::string> planners{"NPT", "PFT10", "PFT30", "PFT100"};
    std::vector<double> budgets{0.5, 1, 2, 3, 5, 10};
    BudgetMode budget_mode = BudgetMode::seconds;
    std::map<std::string, double> iterations_per_second;
    double calibration_seconds = 0.5;
    std::size_t trials = 15;
    int max_steps = 30;
    std::size_t plans_per_cell = 10;
    std::vector<double> count_budgets{1, 5, 10};
    std::size_t context_max = 10;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::filesystem::path results_csv = "results/bench.csv";
    std::filesystem::path count_csv = "results/count_sims.csv";
    std::filesystem::path context_csv = "results/context.csv";
    std::filesystem::path trace_path = "results/trace.json";
    /// plan-episode defaults; the CLI may override them.
    std::string episode_scenario = "open";
    std::string episode_planner = "NPT";
    double episode_budget = 1.0;
};

struct HarnessConfig {
    std::filesystem::path base_dir;
    BlockSpec block;
    NoiseSpec noise;
    SimulatorConfig sim;
    ObsModel obs;
    std::vector<Scenario> scenarios;
    PnpConfig pnp;
    std::filesystem::path checkpoint = "model/pnp.json";
    PlannerConfig planner;
    DataConfig data;
    TrainConfig train;
    std::filesystem::path loss_csv;
    ExperimentConfig experiment;

    const Scenario& scenario(const std::string& name) const;
    /// Relative paths resolve against the config file's directory.
    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses a config document. Every section is optional; unknown keys are rejected.
/// Throws ConfigError naming the offending field.
HarnessConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
HarnessConfig load_config(const std::filesystem::path& path);

/// Worker count after the PUSHPOMDP_WORKERS override; at least 1.
std::size_t resolve_workers(const HarnessConfig& cfg);

/// "NPT", "PFT<n>", "RANDOM" or "WAYPOINT".
struct PlannerSpec {
    enum class Kind { npt, pft, random, waypoint };
    Kind kind = Kind::npt;
    std::size_t particles = 0;
    std::string name;

    static PlannerSpec parse(const std::string& name);
    bool searches() const { return kind == Kind::npt || kind == Kind::pft; }
};

/// Immutable state shared by every trial.
struct HarnessContext {
    HarnessConfig cfg;
    std::shared_ptr<const PnpInference> model;
    /// Iterations per second by planner name, for the iteration and calibrated modes.
    std::map<std::string, double> throughput;

    Budget budget_for(const PlannerSpec& planner, double seconds) const;
    std::unique_ptr<Policy> make_policy(const PlannerSpec& planner, double seconds) const;
    PftModel pft_model() const;
};

/// Loads the checkpoint when an NPT planner is requested and fills the throughput table.
HarnessContext make_context(const HarnessConfig& cfg, const std::vector<std::string>& planners);

/// Iterations per second of one search from the first scenario's start, fresh belief.
double measure_throughput(const HarnessContext& ctx, const PlannerSpec& planner, double seconds,
                          std::uint64_t seed);

struct ResultRow {
    std::string scenario;
    std::string planner;
    double budget_seconds = 0.0;
    std::size_t budget_iterations = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    Vec2 com;
    double progress_percent = 0.0;
    std::string terminal;
    std::size_t steps = 0;
    std::size_t simulate_calls = 0;
    double discounted_return = 0.0;
    double wall_seconds = 0.0;
    std::string error;
};

/// One episode for a trial seed; exceptions become rows with `error` set.
ResultRow run_trial(const HarnessContext& ctx, const Scenario& scenario, const PlannerSpec& planner,
                    double budget_seconds, std::size_t trial, std::uint64_t base_seed,
                    EpisodeResult* episode = nullptr);

/// Scenario x planner x budget x trial grid, rows in grid order regardless of worker count.
std::vector<ResultRow> run_bench(const HarnessContext& ctx, std::uint64_t base_seed, std::size_t workers);

struct CountRow {
    std::string planner;
    double budget_seconds = 0.0;
    std::size_t budget_iterations = 0;
    std::size_t plans = 0;
    double mean_simulate_calls = 0.0;
    double std_error = 0.0;
    std::vector<std::size_t> per_plan;
};

/// Simulate calls of single plans from the first scenario's start, averaged per cell.
std::vector<CountRow> run_count_sims(const HarnessContext& ctx, std::uint64_t base_seed);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);
/// Shortest round-trip decimal form.
std::string format_double(double v);

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& os);
void write_timing_csv(const std::vector<ResultRow>& rows, std::ostream& os);
void write_count_csv(const std::vector<CountRow>& rows, std::ostream& os);
void write_loss_csv(const TrainResult& result, std::ostream& os);
void write_context_csv(const std::vector<ContextPoint>& curve, std::ostream& os);

nlohmann::json episode_trace(const EpisodeResult& episode, const Scenario& scenario, const std::string& planner,
                             std::uint64_t seed);

struct CommandOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::optional<std::string> scenario;
    std::optional<std::string> planner;
};

int cmd_gen_data(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_train(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_bench(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_count_sims(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_eval_context(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log);
int cmd_plan_episode(const HarnessConfig& cfg, const CommandOptions& opt, std::ostream& log);

/// Dispatches by command name; maps ConfigError to 1 and other failures to 2.
int run_command(const std::string& command, const std::filesystem::path& config_path, const CommandOptions& opt,
                std::ostream& log, std::ostream& err);

}  // namespace pushpomdp
