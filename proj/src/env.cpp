#include "pushpomdp/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pushpomdp {

Polygon Polygon::rectangle(double x0, double y0, double x1, double y1) {
    return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
}

double Polygon::signed_area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Vec2& p = vertices[i];
        const Vec2& q = vertices[(i + 1) % vertices.size()];
        a += p.cross(q);
    }
    return 0.5 * a;
}

bool Polygon::contains(const Vec2& p) const {
    // Tolerance keeps points produced by rounding on a shared edge inside.
    constexpr double kEdgeTol = 1e-12;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = vertices[i];
        const Vec2& b = vertices[(i + 1) % n];
        if ((b - a).cross(p - a) < -kEdgeTol) {
            return false;
        }
    }
    return n >= 3;
}

bool Surface::contains(const Vec2& p) const {
    for (const Polygon& poly : polygons) {
        if (poly.contains(p)) {
            return true;
        }
    }
    return false;
}

void Surface::validate() const {
    if (polygons.empty()) {
        throw std::invalid_argument("surface needs at least one polygon");
    }
    for (const Polygon& poly : polygons) {
        if (poly.vertices.size() < 3 || !(poly.signed_area() > 0.0)) {
            throw std::invalid_argument("surface polygons must be counter-clockwise with positive area");
        }
        for (std::size_t i = 0; i < poly.vertices.size(); ++i) {
            const Vec2& a = poly.vertices[i];
            const Vec2& b = poly.vertices[(i + 1) % poly.vertices.size()];
            const Vec2& c = poly.vertices[(i + 2) % poly.vertices.size()];
            if ((b - a).cross(c - b) < 0.0) {
                throw std::invalid_argument("surface polygons must be convex");
            }
        }
    }
}

double Scenario::distance_to_goal(const Vec2& p) const {
    const double dx = p.x - goal.x;
    const double dy = p.y - goal.y;
    return std::sqrt(dx * dx + dy * dy);
}

bool Scenario::in_range(const Vec2& p) const {
    return !fallen(p) && distance_to_goal(p) <= goal_radius;
}

void Scenario::validate() const {
    surface.validate();
    if (!surface.contains(start.position())) {
        throw std::invalid_argument("scenario '" + name + "': start lies off the surface");
    }
    if (!surface.contains(goal)) {
        throw std::invalid_argument("scenario '" + name + "': goal lies off the surface");
    }
    if (!(goal_radius > 0.0)) {
        throw std::invalid_argument("scenario '" + name + "': goal radius must be positive");
    }
}

RewardTerms reward_terms(const Vec2& pos, const Scenario& scenario) {
    RewardTerms t;
    t.distance = scenario.distance_to_goal(pos);
    t.fallen = scenario.fallen(pos);
    t.in_range = !t.fallen && t.distance <= scenario.goal_radius;
    t.total = -kDistanceWeight * t.distance - kFallPenalty * (t.fallen ? 1.0 : 0.0) +
              kGoalBonus * (t.in_range ? 1.0 : 0.0);
    return t;
}

double reward(const Vec2& pos, const Scenario& scenario) {
    return reward_terms(pos, scenario).total;
}

const char* to_string(Terminal t) {
    switch (t) {
        case Terminal::goal:
            return "goal";
        case Terminal::fallen:
            return "fallen";
        case Terminal::step_limit:
            return "step-limit";
    }
    return "unknown";
}

double EpisodeResult::discounted_return(double gamma) const {
    double g = 0.0;
    double w = 1.0;
    for (const StepRecord& s : steps) {
        g += w * s.reward;
        w *= gamma;
    }
    return g;
}

StepRecord step(const Pose2D& pose, const BlockSpec& block, const PushAction& action,
                const Scenario& scenario, const NoiseSpec& noise, Rng& rng, const SimulatorConfig& sim) {
    StepRecord rec;
    rec.action = action;
    rec.outcome = simulate_push(pose, block, action, noise, rng, sim);
    const RewardTerms terms = reward_terms(rec.outcome.position(), scenario);
    rec.reward = terms.total;
    rec.fallen = terms.fallen;
    rec.reached = terms.in_range;
    return rec;
}

EpisodeResult run_episode(Policy& policy, const Scenario& scenario, const BlockSpec& block, Rng& rng,
                          const EpisodeOptions& options) {
    block.validate();
    // Separate streams keep the true outcomes independent of how much randomness the planner draws.
    Rng env_rng(rng());
    Rng policy_rng(rng());

    EpisodeResult result;
    result.start = scenario.start;
    result.com = block.com;
    policy.reset(scenario, scenario.start);
    Pose2D pose = scenario.start;
    for (int t = 0; t < options.max_steps; ++t) {
        PushAction action;
        try {
            action = policy.act(pose, policy_rng);
            action.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error("policy '" + policy.name() + "' failed at step " + std::to_string(t) +
                                     ": " + e.what());
        }
        StepRecord rec = step(pose, block, action, scenario, options.noise, env_rng, options.sim);
        result.steps.push_back(rec);
        if (rec.fallen) {
            result.terminal = Terminal::fallen;
            break;
        }
        if (rec.reached) {
            result.terminal = Terminal::goal;
            break;
        }
        policy.observe(pose, action, rec.outcome);
        pose = rec.outcome;
    }
    result.simulate_calls = policy.simulate_calls();
    result.progress_percent = progress(result, scenario);
    return result;
}

double progress(const EpisodeResult& episode, const Scenario& scenario) {
    if (episode.steps.empty()) {
        throw std::invalid_argument("progress of an empty episode is undefined");
    }
    const double d0 = scenario.distance_to_goal(episode.start.position());
    if (d0 == 0.0) {
        return 100.0;
    }
    Vec2 last = episode.steps.back().outcome.position();
    if (episode.terminal == Terminal::fallen) {
        last = episode.start.position();
        for (const StepRecord& s : episode.steps) {
            if (!s.fallen) {
                last = s.outcome.position();
            }
        }
    }
    const double d = scenario.distance_to_goal(last);
    return std::max(0.0, 100.0 * (d0 - d) / d0);
}

std::vector<Scenario> builtin_scenarios() {
    std::vector<Scenario> out;

    Scenario open;
    open.name = "open";
    open.surface.polygons = {Polygon::rectangle(-1.0, -1.0, 1.0, 1.0)};
    open.start = Pose2D{-0.75, 0.0, 0.0};
    open.goal = {0.75, 0.0};
    open.waypoints = {open.goal};
    out.push_back(open);

    Scenario corridor;
    corridor.name = "corridor";
    corridor.surface.polygons = {Polygon::rectangle(-1.05, -0.3, -0.45, 0.3),
                                 Polygon::rectangle(-0.45, -0.15, 0.95, 0.15)};
    corridor.start = Pose2D{-0.75, 0.0, 0.0};
    corridor.goal = {0.75, 0.0};
    corridor.waypoints = {corridor.goal};
    out.push_back(corridor);

    Scenario ring;
    ring.name = "ring";
    ring.surface.polygons = {Polygon::rectangle(-1.05, -0.3, -0.45, 0.3),
                             Polygon::rectangle(-0.45, -0.15, 0.45, 0.15),
                             Polygon::rectangle(0.15, -0.15, 0.45, 0.9)};
    ring.start = Pose2D{-0.75, 0.0, 0.0};
    ring.goal = {0.3, 0.75};
    ring.waypoints = {{0.3, 0.0}, ring.goal};
    out.push_back(ring);

    for (const Scenario& s : out) {
        s.validate();
    }
    return out;
}

Scenario builtin_scenario(const std::string& name) {
    for (Scenario& s : builtin_scenarios()) {
        if (s.name == name) {
            return s;
        }
    }
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json polys = nlohmann::json::array();
    for (const Polygon& p : s.surface.polygons) {
        nlohmann::json verts = nlohmann::json::array();
        for (const Vec2& v : p.vertices) {
            verts.push_back({v.x, v.y});
        }
        polys.push_back(verts);
    }
    nlohmann::json j = {
        {"name", s.name},
        {"polygons", polys},
        {"start", {{"x", s.start.x}, {"y", s.start.y}, {"yaw", s.start.yaw}}},
        {"goal", {s.goal.x, s.goal.y}},
        {"goal_radius", s.goal_radius},
    };
    if (!s.waypoints.empty()) {
        nlohmann::json wps = nlohmann::json::array();
        for (const Vec2& w : s.waypoints) {
            wps.push_back({w.x, w.y});
        }
        j["waypoints"] = wps;
    }
    return j;
}

namespace {

Scenario parse_scenario(const nlohmann::json& j) {
    Scenario s;
    s.name = j.at("name").get<std::string>();
    for (const auto& poly : j.at("polygons")) {
        Polygon p;
        for (const auto& v : poly) {
            p.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
        }
        if (p.signed_area() < 0.0) {
            std::reverse(p.vertices.begin(), p.vertices.end());
        }
        s.surface.polygons.push_back(std::move(p));
    }
    const auto& st = j.at("start");
    s.start = Pose2D::make(st.at("x").get<double>(), st.at("y").get<double>(), st.value("yaw", 0.0));
    s.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>()};
    s.goal_radius = j.value("goal_radius", 0.2);
    if (j.contains("waypoints")) {
        for (const auto& w : j.at("waypoints")) {
            s.waypoints.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
        }
    }
    s.validate();
    return s;
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        return parse_scenario(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed scenario: ") + e.what());
    }
}

void WaypointPolicy::reset(const Scenario& scenario, const Pose2D&) {
    route_ = scenario.waypoints.empty() ? std::vector<Vec2>{scenario.goal} : scenario.waypoints;
    next_ = 0;
}

PushAction WaypointPolicy::act(const Pose2D& current, Rng&) {
    while (next_ + 1 < route_.size() && (route_[next_] - current.position()).norm() < switch_radius_) {
        ++next_;
    }
    const Vec2 d = route_[next_] - current.position();
    return PushAction::toward(std::atan2(d.y, d.x), speed_, travel_);
}

PushAction RandomPolicy::act(const Pose2D&, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    return PushAction::toward(u(rng), speed_, travel_);
}

}  // namespace pushpomdp
