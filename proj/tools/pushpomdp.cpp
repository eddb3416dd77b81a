#include <iostream>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "pushpomdp/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Push planning under an unknown center of mass"};
    app.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string scenario;
    std::string planner;

    const std::pair<const char*, const char*> commands[] = {
        {"gen-data", "Simulate push datasets (JSONL)"},
        {"train", "Train the push model and write a checkpoint"},
        {"bench", "Run planner trials and write the results CSV"},
        {"count-sims", "Count simulate calls per planner and budget"},
        {"eval-context", "Prediction error against context size"},
        {"plan-episode", "Run one episode and write a JSON trace"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "JSON config file")->required();
        sub->add_option("--seed", seed, "Override the base seed");
        sub->add_option("--out", out, "Output path");
        if (std::string(name) == "plan-episode") {
            sub->add_option("--scenario", scenario, "Scenario name");
            sub->add_option("--planner", planner, "NPT, PFT<n>, RANDOM or WAYPOINT");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    pushpomdp::CommandOptions opt;
    if (sub->count("--seed") > 0) {
        opt.seed = seed;
    }
    if (sub->count("--out") > 0) {
        opt.out = out;
    }
    if (sub->get_option_no_throw("--scenario") != nullptr && sub->count("--scenario") > 0) {
        opt.scenario = scenario;
    }
    if (sub->get_option_no_throw("--planner") != nullptr && sub->count("--planner") > 0) {
        opt.planner = planner;
    }
    return pushpomdp::run_command(sub->get_name(), config, opt, std::cout, std::cerr);
}
