#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pushpomdp/geometry.hpp"

namespace pushpomdp {

/// Convex polygon, stored counter-clockwise.
struct Polygon {
    std::vector<Vec2> vertices;

    static Polygon rectangle(double x0, double y0, double x1, double y1);
    /// Boundary points count as inside.
    bool contains(const Vec2& p) const;
    double signed_area() const;
};

/// Union of convex polygons the block can rest on.
struct Surface {
    std::vector<Polygon> polygons;

    bool contains(const Vec2& p) const;
    void validate() const;
};

struct Scenario {
    std::string name;
    Surface surface;
    Pose2D start;
    Vec2 goal;
    double goal_radius = 0.2;
    /// Reference route for the scripted solvability policy; optional.
    std::vector<Vec2> waypoints;

    double distance_to_goal(const Vec2& p) const;
    bool fallen(const Vec2& p) const { return !surface.contains(p); }
    bool in_range(const Vec2& p) const;
    void validate() const;
};

struct RewardTerms {
    double distance = 0.0;
    bool fallen = false;
    bool in_range = false;
    double total = 0.0;
};

constexpr double kDistanceWeight = 10.0;
constexpr double kFallPenalty = 100.0;
constexpr double kGoalBonus = 10000.0;

/// -10 * distance - 100 * fallen + 10000 * inRange, with fallen taking precedence.
RewardTerms reward_terms(const Vec2& pos, const Scenario& scenario);
double reward(const Vec2& pos, const Scenario& scenario);

struct StepRecord {
    PushAction action;
    Pose2D outcome;
    double reward = 0.0;
    bool fallen = false;
    bool reached = false;
};

enum class Terminal { goal, fallen, step_limit };

const char* to_string(Terminal t);

struct EpisodeResult {
    Pose2D start;
    Vec2 com;
    std::vector<StepRecord> steps;
    double progress_percent = 0.0;
    Terminal terminal = Terminal::step_limit;
    std::size_t simulate_calls = 0;

    double discounted_return(double gamma) const;
};

/// Anything that chooses pushes from the observed pose stream.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    /// Clears belief state for a fresh episode.
    virtual void reset(const Scenario& scenario, const Pose2D& start) = 0;
    virtual PushAction act(const Pose2D& current, Rng& rng) = 0;
    virtual void observe(const Pose2D& before, const PushAction& action, const Pose2D& after) = 0;
    /// Cumulative simulate calls since the last reset.
    virtual std::size_t simulate_calls() const { return 0; }
};

struct EpisodeOptions {
    int max_steps = 30;
    NoiseSpec noise;
    SimulatorConfig sim;
};

StepRecord step(const Pose2D& pose, const BlockSpec& block, const PushAction& action,
                const Scenario& scenario, const NoiseSpec& noise, Rng& rng,
                const SimulatorConfig& sim = {});

/// Plan, execute, and feed back until the goal, a fall, or the step limit.
/// Policy exceptions are rethrown as std::runtime_error naming the failing step.
EpisodeResult run_episode(Policy& policy, const Scenario& scenario, const BlockSpec& block, Rng& rng,
                          const EpisodeOptions& options = {});

/// Percent of the start distance closed; falls are scored at the last on-surface pose.
double progress(const EpisodeResult& episode, const Scenario& scenario);

std::vector<Scenario> builtin_scenarios();
/// Throws std::invalid_argument for unknown names.
Scenario builtin_scenario(const std::string& name);

nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& j);

/// Closed-loop policy that pushes the block straight at successive waypoints.
class WaypointPolicy : public Policy {
public:
    explicit WaypointPolicy(double switch_radius = 0.12, double speed = 0.10, double travel = 0.15)
        : switch_radius_(switch_radius), speed_(speed), travel_(travel) {}
    std::string name() const override { return "scripted"; }
    void reset(const Scenario& scenario, const Pose2D& start) override;
    PushAction act(const Pose2D& current, Rng& rng) override;
    void observe(const Pose2D&, const PushAction&, const Pose2D&) override {}

private:
    std::vector<Vec2> route_;
    std::size_t next_ = 0;
    double switch_radius_;
    double speed_;
    double travel_;
};

/// Uniformly random push directions.
class RandomPolicy : public Policy {
public:
    explicit RandomPolicy(double speed = 0.10, double travel = 0.15) : speed_(speed), travel_(travel) {}
    std::string name() const override { return "random"; }
    void reset(const Scenario&, const Pose2D&) override {}
    PushAction act(const Pose2D& current, Rng& rng) override;
    void observe(const Pose2D&, const PushAction&, const Pose2D&) override {}

private:
    double speed_;
    double travel_;
};

}  // namespace pushpomdp
