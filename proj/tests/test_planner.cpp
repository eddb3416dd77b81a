#include <gtest/gtest.h>

#include <cmath>

#include "pushpomdp/planner.hpp"

using namespace pushpomdp;

namespace {

// Deterministic stand-in: every push earns `reward`; optionally every child is terminal.
struct FakeBackend {
    struct Belief {
        int depth = 0;
    };
    struct RolloutState {};
    struct Expansion {
        Belief child;
        RolloutState rollout;
        double reward = 0.0;
        bool terminal = false;
    };
    struct Step {
        double reward = 0.0;
        bool terminal = false;
    };

    double reward = 1.0;
    bool terminal = false;
    std::size_t expansions = 0;
    std::size_t rollout_steps = 0;

    Expansion expand(Belief& parent, const PushAction&, Rng&) {
        ++expansions;
        return {{parent.depth + 1}, {}, reward, terminal};
    }
    Step rollout_step(RolloutState&, const PushAction&, Rng&) {
        ++rollout_steps;
        return {reward, false};
    }
};

PlannerConfig iters(std::size_t n, int depth = 3) {
    PlannerConfig cfg;
    cfg.depth = depth;
    cfg.budget = Budget::iters(n);
    return cfg;
}

std::shared_ptr<const PnpInference> tiny_model() {
    PnpConfig cfg;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 8;
    cfg.decoder_hidden = {8};
    return std::make_shared<PnpInference>(PnpModel(cfg, 3));
}

}  // namespace

TEST(Widening, LimitValues) {
    EXPECT_DOUBLE_EQ(widening_limit(1.0, 16, 0.25), 2.0);
    EXPECT_NEAR(widening_limit(3.0, 81, 0.25), 9.0, 1e-12);
    EXPECT_DOUBLE_EQ(widening_limit(3.0, 1, 0.25), 3.0);
}

TEST(Dpw, FirstIterationReturnIsDiscountedRollout) {
    FakeBackend be;
    be.reward = 2.0;
    Dpw<FakeBackend> dpw(be, iters(1));
    Rng rng(1);
    const PlanResult r = dpw.plan({}, rng);
    ASSERT_EQ(r.root_q.size(), 1u);
    EXPECT_NEAR(r.root_q[0], 2.0 * (1.0 + 0.8 + 0.64), 1e-12);
    EXPECT_EQ(r.iterations, 1u);
    EXPECT_EQ(r.simulate_calls, 1u);
    EXPECT_EQ(be.rollout_steps, 2u);
}

TEST(Dpw, TwoStepReturnThroughTree) {
    FakeBackend be;
    PlannerConfig cfg = iters(0, 2);
    Dpw<FakeBackend> dpw(be, cfg);
    Rng rng(2);
    dpw.plan({}, rng);
    // Depth-2 return of unit rewards: 1 + 0.8 * 1.
    EXPECT_NEAR(dpw.simulate(0, 2, rng), 1.8, 1e-12);
    EXPECT_NEAR(dpw.simulate(0, 2, rng), 1.8, 1e-12);
    EXPECT_EQ(dpw.check_tree(), 0u);
}

TEST(Dpw, TerminalChildStopsWithoutRollout) {
    FakeBackend be;
    be.terminal = true;
    be.reward = 10000.0;
    Dpw<FakeBackend> dpw(be, iters(50));
    Rng rng(3);
    const PlanResult r = dpw.plan({}, rng);
    EXPECT_EQ(be.rollout_steps, 0u);
    for (double q : r.root_q) EXPECT_DOUBLE_EQ(q, 10000.0);
    EXPECT_EQ(r.max_depth, 1);
}

TEST(Dpw, UcbPrefersUnvisitedThenLessVisited) {
    using Edge = Dpw<FakeBackend>::Edge;
    std::vector<Edge> edges(3);
    edges[0].visits = 5;
    edges[1].visits = 1;
    edges[2].visits = 5;
    EXPECT_EQ(Dpw<FakeBackend>::ucb_select(edges, 12, 100.0), 1u);
    edges[2].visits = 0;
    EXPECT_EQ(Dpw<FakeBackend>::ucb_select(edges, 12, 100.0), 2u);
    edges[2].visits = 5;
    edges[0].q = 50.0;
    EXPECT_EQ(Dpw<FakeBackend>::ucb_select(edges, 12, 0.0), 0u);
    edges[0].q = 0.0;
    EXPECT_EQ(Dpw<FakeBackend>::ucb_select(edges, 12, 0.0), 0u);  // tie goes to the lowest index
}

TEST(Dpw, RootTieBreaksToFirstAction) {
    FakeBackend be;
    Rng rng(4);
    PlannerConfig cfg = iters(40, 1);
    Dpw<FakeBackend> d2(be, cfg);
    const PlanResult r = d2.plan({}, rng);
    ASSERT_GT(r.root_actions.size(), 1u);
    EXPECT_EQ(r.action.theta, r.root_actions[0].theta);
}

TEST(Dpw, WideningAndConservationHoldUnderAudit) {
    FakeBackend be;
    PlannerConfig cfg = iters(3000);
    cfg.audit = true;
    Dpw<FakeBackend> dpw(be, cfg);
    Rng rng(5);
    const PlanResult r = dpw.plan({}, rng);
    EXPECT_EQ(r.invariant_violations, 0u);
    const auto& root = dpw.nodes().front();
    EXPECT_EQ(root.visits, 3001u);
    EXPECT_LE(static_cast<double>(root.edges.size()), std::ceil(widening_limit(3.0, root.visits, 0.25)));
}

TEST(Dpw, ZeroSecondBudgetFallsBackToRandom) {
    FakeBackend be;
    PlannerConfig cfg;
    cfg.budget = Budget::wall(0.0);
    Dpw<FakeBackend> dpw(be, cfg);
    Rng rng(6);
    const PlanResult r = dpw.plan({}, rng);
    EXPECT_TRUE(r.fallback_random);
    EXPECT_EQ(r.iterations, 0u);
    EXPECT_TRUE(r.root_actions.empty());
}

TEST(PlannerConfig, Validation) {
    PlannerConfig cfg;
    cfg.gamma = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = PlannerConfig{};
    cfg.depth = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = PlannerConfig{};
    cfg.budget = Budget::wall(-1.0);
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Npt, AuditedSearchIsCleanAndDeterministic) {
    const auto model = tiny_model();
    const Scenario sc = builtin_scenario("open");
    PlannerConfig cfg = iters(500);
    cfg.audit = true;
    Rng r1(7), r2(7);
    const PlanResult a = plan_npt(*model, sc, sc.start, History{}, cfg, r1);
    const PlanResult b = plan_npt(*model, sc, sc.start, History{}, cfg, r2);
    EXPECT_EQ(a.invariant_violations, 0u);
    EXPECT_EQ(a.action.theta, b.action.theta);
    EXPECT_EQ(a.root_q, b.root_q);
    EXPECT_EQ(a.simulate_calls, b.simulate_calls);
    EXPECT_LE(a.max_depth, 3);
}

TEST(Pft, AuditedSearchIsClean) {
    const Scenario sc = builtin_scenario("open");
    Rng rng(8);
    const ParticleBelief b = init_prior(20, BlockSpec{}, rng, sc.start);
    PlannerConfig cfg = iters(500);
    cfg.audit = true;
    const PlanResult r = plan_pft(PftModel{}, sc, b, cfg, rng);
    EXPECT_EQ(r.invariant_violations, 0u);
    EXPECT_GT(r.simulate_calls, 500u);
}

TEST(Pft, SingleParticleChildKeepsTheParticle) {
    const Scenario sc = builtin_scenario("open");
    Rng rng(9);
    const ParticleBelief b = init_prior(1, BlockSpec{}, rng, sc.start);
    PftModel model;
    PftBackend backend(model, sc);
    PftBackend::Belief parent{b};
    const auto ex = backend.expand(parent, PushAction{0.3}, rng);
    ASSERT_EQ(ex.child.particles.particles.size(), 1u);
    EXPECT_EQ(ex.child.particles.particles[0].com.x, b.particles[0].com.x);
    EXPECT_EQ(ex.child.particles.particles[0].weight, 1.0);
    EXPECT_EQ(ex.rollout.block.com.x, b.particles[0].com.x);
}

TEST(Npt, ChildReusesLatentOnceHistoryIsFull) {
    const auto model = tiny_model();
    const Scenario sc = builtin_scenario("open");
    NptBackend backend(*model, sc);
    Rng rng(10);
    NptBackend::Belief parent{sc.start, History{}, std::nullopt};
    auto ex = backend.expand(parent, PushAction{0.0}, rng);
    EXPECT_TRUE(parent.latent.has_value());
    EXPECT_FALSE(ex.child.latent.has_value());
    EXPECT_EQ(ex.child.history.size(), 1u);

    History full;
    for (int i = 0; i < 10; ++i) full.push(ex.child.history.records()[0]);
    NptBackend::Belief fp{sc.start, full, std::nullopt};
    auto ex2 = backend.expand(fp, PushAction{1.0}, rng);
    ASSERT_TRUE(ex2.child.latent.has_value());
    EXPECT_EQ(ex2.child.latent->mean, fp.latent->mean);
}

TEST(Policies, EpisodesRunToTheEnd) {
    const Scenario sc = builtin_scenario("open");
    PlannerConfig cfg = iters(30);
    NptPolicy npt(tiny_model(), cfg);
    PftPolicy pft(5, PftModel{}, cfg);
    EXPECT_EQ(pft.name(), "PFT5");
    EpisodeOptions opt;
    opt.max_steps = 4;
    for (Policy* p : std::initializer_list<Policy*>{&npt, &pft}) {
        Rng rng(11);
        const EpisodeResult r = run_episode(*p, sc, BlockSpec{}.with_com({0.002, 0.0}), rng, opt);
        EXPECT_GE(r.steps.size(), 1u);
        EXPECT_LE(r.steps.size(), 4u);
        EXPECT_GT(p->simulate_calls(), 0u);
    }
    EXPECT_LE(npt.history().size(), 4u);
}
