#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pushpomdp/env.hpp"

using namespace pushpomdp;
using oracle::oracle_fallen;
using oracle::oracle_reward;
using oracle::point_in_polygon;

namespace {

class Scripted : public Policy {
public:
    explicit Scripted(double theta) : theta_(theta) {}
    std::string name() const override { return "scripted"; }
    void reset(const Scenario&, const Pose2D&) override { observed = 0; }
    PushAction act(const Pose2D&, Rng&) override { return PushAction::toward(theta_); }
    void observe(const Pose2D&, const PushAction&, const Pose2D&) override { ++observed; }
    int observed = 0;

private:
    double theta_;
};

}  // namespace

TEST(Reward, WorkedExamples) {
    const Scenario open = builtin_scenario("open");
    EXPECT_EQ(reward(open.goal, open), 10000.0);
    EXPECT_EQ(reward({open.goal.x - 0.5, open.goal.y}, open), -5.0);
    Scenario far = open;
    far.goal = {1.5, 0.0};
    far.surface.polygons.push_back(Polygon::rectangle(1.4, -0.1, 1.6, 0.1));
    EXPECT_EQ(reward({far.goal.x - 0.0, far.goal.y + 1.0}, far), -110.0);
}

TEST(Reward, MatchesIndependentEvaluationOnAllScenarios) {
    Rng rng(17);
    std::uniform_real_distribution<double> u(-1.3, 1.3);
    for (const auto& s : builtin_scenarios()) {
        for (int i = 0; i < 1000; ++i) {
            const double x = u(rng), y = u(rng);
            EXPECT_EQ(reward({x, y}, s), oracle_reward(s, x, y)) << s.name << " at " << x << "," << y;
            EXPECT_EQ(s.fallen({x, y}), oracle_fallen(s, x, y));
        }
    }
}

TEST(Reward, FallenOverridesRange) {
    Scenario s = builtin_scenario("open");
    s.goal = {0.95, 0.0};
    const auto t = reward_terms({1.05, 0.0}, s);
    EXPECT_TRUE(t.fallen);
    EXPECT_FALSE(t.in_range);
    EXPECT_NEAR(t.total, -10.0 * 0.1 - 100.0, 1e-12);
}

TEST(Surface, BoundaryCountsAsOnSurface) {
    const Scenario s = builtin_scenario("open");
    EXPECT_FALSE(s.fallen({1.0, 0.3}));
    EXPECT_FALSE(s.fallen({-1.0, -1.0}));
    EXPECT_TRUE(s.fallen({1.0 + 1e-9, 0.0}));
}

TEST(Scenarios, BuiltinsAreValidAndNamed) {
    const auto all = builtin_scenarios();
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[0].name, "open");
    EXPECT_EQ(all[1].name, "corridor");
    EXPECT_EQ(all[2].name, "ring");
    for (const auto& s : all) {
        EXPECT_NO_THROW(s.validate());
        EXPECT_FALSE(s.fallen(s.start.position()));
        EXPECT_FALSE(s.fallen(s.goal));
    }
    EXPECT_THROW(builtin_scenario("moon"), std::invalid_argument);
}

TEST(Scenarios, JsonRoundTrip) {
    for (const auto& s : builtin_scenarios()) {
        const Scenario r = scenario_from_json(scenario_to_json(s));
        EXPECT_EQ(r.name, s.name);
        EXPECT_EQ(r.goal.x, s.goal.x);
        EXPECT_EQ(r.surface.polygons.size(), s.surface.polygons.size());
        Rng rng(2);
        std::uniform_real_distribution<double> u(-1.2, 1.2);
        for (int i = 0; i < 200; ++i) {
            const Vec2 p{u(rng), u(rng)};
            EXPECT_EQ(r.fallen(p), s.fallen(p));
        }
    }
    EXPECT_THROW(scenario_from_json(nlohmann::json{{"name", "x"}}), std::invalid_argument);
}

TEST(Step, StraightPushIntoGoalReachesIt) {
    Scenario s = builtin_scenario("open");
    s.goal = {s.start.x + 0.15, s.start.y};
    Rng rng(1);
    const StepRecord r = step(s.start, BlockSpec{}, PushAction::toward(0.0), s, NoiseSpec::none(), rng);
    EXPECT_TRUE(r.reached);
    EXPECT_FALSE(r.fallen);
    EXPECT_NEAR(r.reward, 10000.0 - 10.0 * std::hypot(r.outcome.x - s.goal.x, r.outcome.y - s.goal.y), 1e-9);
}

TEST(Step, PushOffEdgeFalls) {
    const Scenario s = builtin_scenario("corridor");
    Rng rng(1);
    Pose2D p{0.0, 0.1, 0.0};
    const StepRecord r = step(p, BlockSpec{}, PushAction::toward(kPi / 2), s, NoiseSpec::none(), rng);
    EXPECT_TRUE(r.fallen);
    EXPECT_LE(r.reward, -100.0);
}

TEST(Step, MidTableRewardIsNegativeDistance) {
    const Scenario s = builtin_scenario("open");
    Rng rng(4);
    const StepRecord r = step(s.start, BlockSpec{}.with_com({0.003, 0.002}), PushAction::toward(0.3), s, NoiseSpec{},
                              rng);
    const double dx = r.outcome.x - s.goal.x, dy = r.outcome.y - s.goal.y;
    EXPECT_EQ(r.reward, -10.0 * std::sqrt(dx * dx + dy * dy));
}

TEST(Episode, WaypointPolicySolvesEveryScenarioWithCenteredCom) {
    for (const auto& s : builtin_scenarios()) {
        WaypointPolicy p;
        Rng rng(8);
        const EpisodeResult e = run_episode(p, s, BlockSpec{}, rng);
        EXPECT_EQ(e.terminal, Terminal::goal) << s.name;
        EXPECT_LE(e.steps.size(), 30u);
        EXPECT_TRUE(e.steps.back().reached);
    }
}

TEST(Episode, PushingTowardEdgeFalls) {
    const Scenario s = builtin_scenario("corridor");
    Scripted p(kPi / 2);
    Rng rng(3);
    const EpisodeResult e = run_episode(p, s, BlockSpec{}, rng);
    EXPECT_EQ(e.terminal, Terminal::fallen);
    EXPECT_TRUE(e.steps.back().fallen);
    // Feedback goes to the planner for every non-terminal step only.
    EXPECT_EQ(p.observed, static_cast<int>(e.steps.size()) - 1);
}

TEST(Episode, LengthBoundAndDiscountedReturn) {
    const Scenario s = builtin_scenario("open");
    RandomPolicy p;
    Rng rng(12);
    const EpisodeResult e = run_episode(p, s, BlockSpec{}.with_com({0.004, -0.002}), rng);
    EXPECT_LE(e.steps.size(), 30u);
    double g = 0.0;
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
        g += std::pow(0.8, static_cast<double>(t)) * e.steps[t].reward;
    }
    EXPECT_NEAR(e.discounted_return(0.8), g, 1e-9 * std::max(1.0, std::abs(g)));
    if (e.terminal == Terminal::step_limit) {
        EXPECT_EQ(e.steps.size(), 30u);
    }
}

TEST(Episode, SameSeedSameTrajectory) {
    const Scenario s = builtin_scenario("open");
    RandomPolicy p1, p2;
    Rng r1(5), r2(5);
    const EpisodeResult a = run_episode(p1, s, BlockSpec{}, r1);
    const EpisodeResult b = run_episode(p2, s, BlockSpec{}, r2);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        EXPECT_EQ(a.steps[i].outcome.x, b.steps[i].outcome.x);
        EXPECT_EQ(a.steps[i].reward, b.steps[i].reward);
    }
}

TEST(Progress, PaperExampleAndEdgeCases) {
    Scenario s = builtin_scenario("open");
    s.start = {-0.75, 0.0, 0.0};
    s.goal = {2.25, 0.0};
    s.surface.polygons = {Polygon::rectangle(-1, -1, 3, 1)};
    EpisodeResult e;
    e.start = s.start;
    StepRecord r;
    r.outcome = {1.25, 0.0, 0.0};
    e.steps = {r};
    EXPECT_NEAR(progress(e, s), 100.0 * 2.0 / 3.0, 1e-9);
    e.steps[0].outcome = {-0.75, 0.0, 0.0};
    EXPECT_NEAR(progress(e, s), 0.0, 1e-12);
    e.steps[0].outcome = {-0.9, 0.0, 0.0};
    EXPECT_EQ(progress(e, s), 0.0);
    e.steps[0].outcome = {-0.5, 2.0, 0.0};
    e.steps[0].fallen = true;
    e.terminal = Terminal::fallen;
    EXPECT_NEAR(progress(e, s), 0.0, 1e-12);
    EpisodeResult empty;
    EXPECT_THROW(progress(empty, s), std::invalid_argument);
    Scenario at_goal = s;
    at_goal.goal = s.start.position();
    e.terminal = Terminal::step_limit;
    EXPECT_EQ(progress(e, at_goal), 100.0);
}
