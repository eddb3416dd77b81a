#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pushpomdp/env.hpp"
#include "pushpomdp/particle_belief.hpp"
#include "pushpomdp/pnp.hpp"
#include "pushpomdp/pnp_inference.hpp"

namespace pushpomdp {

/// Search budget: either a fixed iteration count (deterministic) or wall-clock seconds.
struct Budget {
    enum class Kind { iterations, seconds };

    Kind kind = Kind::iterations;
    std::size_t iterations = 1000;
    double seconds = 0.0;

    static Budget iters(std::size_t n) { return {Kind::iterations, n, 0.0}; }
    static Budget wall(double s) { return {Kind::seconds, 0, s}; }
    void validate() const;
};

struct PlannerConfig {
    int depth = 3;
    double gamma = 0.8;
    double alpha_obs = 0.25;
    double k_action = 3.0;
    double alpha_action = 0.25;
    double ucb_c = 100.0;
    Budget budget;
    /// Pusher speed and travel used for every candidate action.
    double speed = 0.10;
    double travel = 0.15;
    /// Keep per-edge return logs and check tree invariants on every backup.
    bool audit = false;

    void validate() const;
};

/// k * n^alpha, the progressive-widening child limit.
inline double widening_limit(double k, std::size_t n, double alpha) {
    return k * std::pow(static_cast<double>(n), alpha);
}

struct PlanResult {
    PushAction action;
    std::vector<PushAction> root_actions;
    std::vector<double> root_q;
    std::vector<std::size_t> root_visits;
    std::size_t iterations = 0;
    /// Simulate invocations with depth > 0.
    std::size_t simulate_calls = 0;
    int max_depth = 0;
    double wall_seconds = 0.0;
    std::size_t tree_nodes = 0;
    /// Invariant failures found by the audit; always 0 when auditing is off.
    std::size_t invariant_violations = 0;
    /// True when no iteration completed and the action was drawn at random.
    bool fallback_random = false;
};

/// Double progressive widening search, generic over the belief backend.
///
/// A backend supplies
///   Belief                                  node payload
///   RolloutState                            hidden state carried through a rollout
///   Expansion expand(Belief&, PushAction, Rng&)   with fields child, rollout, reward, terminal
///   Step rollout_step(RolloutState&, PushAction, Rng&)  with fields reward, terminal
/// `expand` may cache derived data on the parent belief.
template <class Backend>
class Dpw {
public:
    using Belief = typename Backend::Belief;
    using RolloutState = typename Backend::RolloutState;

    struct Outcome {
        double reward = 0.0;
        bool terminal = false;
        std::size_t child = 0;
    };
    struct Edge {
        PushAction action;
        std::size_t visits = 0;
        double q = 0.0;
        std::vector<Outcome> outcomes;
        std::vector<double> returns;
    };
    struct Node {
        Belief belief;
        int depth = 0;
        /// Creation counts as the first visit.
        std::size_t visits = 1;
        std::vector<Edge> edges;
    };

    Dpw(Backend& backend, const PlannerConfig& cfg) : backend_(backend), cfg_(cfg) { cfg_.validate(); }

    PlanResult plan(Belief root, Rng& rng) {
        using clock = std::chrono::steady_clock;
        nodes_.clear();
        nodes_.push_back(Node{std::move(root), 0, 1, {}});
        result_ = PlanResult{};
        const auto t0 = clock::now();
        const auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
        while (cfg_.budget.kind == Budget::Kind::iterations ? result_.iterations < cfg_.budget.iterations
                                                             : elapsed() < cfg_.budget.seconds) {
            simulate(0, cfg_.depth, rng);
            ++result_.iterations;
        }
        result_.wall_seconds = elapsed();
        const Node& r = nodes_.front();
        if (r.edges.empty()) {
            std::cerr << "warning: planner completed no iterations; choosing a random push\n";
            result_.action = random_action(rng);
            result_.fallback_random = true;
        } else {
            std::size_t best = 0;
            for (std::size_t i = 0; i < r.edges.size(); ++i) {
                result_.root_actions.push_back(r.edges[i].action);
                result_.root_q.push_back(r.edges[i].q);
                result_.root_visits.push_back(r.edges[i].visits);
                if (r.edges[i].q > r.edges[best].q) {
                    best = i;
                }
            }
            result_.action = r.edges[best].action;
        }
        if (cfg_.audit) {
            result_.invariant_violations += check_tree();
        }
        result_.tree_nodes = nodes_.size();
        return result_;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const PlanResult& last_result() const { return result_; }

    /// Visit conservation, widening bounds, running means and depth bound over the whole tree.
    std::size_t check_tree() const {
        std::size_t bad = 0;
        for (const Node& n : nodes_) {
            std::size_t sum = 0;
            for (const Edge& e : n.edges) {
                sum += e.visits;
                bad += edge_violations(e);
            }
            if (n.visits - 1 != sum) {
                ++bad;
            }
            if (!n.edges.empty() &&
                static_cast<double>(n.edges.size()) >
                    std::ceil(widening_limit(cfg_.k_action, n.visits, cfg_.alpha_action))) {
                ++bad;
            }
            if (n.depth > cfg_.depth) {
                ++bad;
            }
        }
        return bad;
    }

    /// Uniform random rollout to depth d from a hidden state.
    double rollout(RolloutState& s, int d, Rng& rng) {
        double total = 0.0;
        double discount = 1.0;
        for (int i = 0; i < d; ++i) {
            const auto st = backend_.rollout_step(s, random_action(rng), rng);
            total += discount * st.reward;
            if (st.terminal) {
                break;
            }
            discount *= cfg_.gamma;
        }
        return total;
    }

    double simulate(std::size_t h, int d, Rng& rng) {
        if (d <= 0) {
            return 0.0;
        }
        ++result_.simulate_calls;
        const int reached = cfg_.depth - d + 1;
        if (reached > result_.max_depth) {
            result_.max_depth = reached;
        }
        const std::size_t a = widen_actions(h, rng);
        double total = 0.0;
        Edge& edge = nodes_[h].edges[a];
        if (static_cast<double>(edge.outcomes.size()) <= widening_limit(1.0, edge.visits, cfg_.alpha_obs)) {
            auto ex = backend_.expand(nodes_[h].belief, edge.action, rng);
            const int child_depth = nodes_[h].depth + 1;
            nodes_.push_back(Node{std::move(ex.child), child_depth, 1, {}});
            const std::size_t child = nodes_.size() - 1;
            nodes_[h].edges[a].outcomes.push_back({ex.reward, ex.terminal, child});
            total = ex.reward;
            if (!ex.terminal) {
                total += cfg_.gamma * rollout(ex.rollout, d - 1, rng);
            }
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, edge.outcomes.size() - 1);
            const Outcome o = edge.outcomes[pick(rng)];
            total = o.reward;
            if (!o.terminal) {
                total += cfg_.gamma * simulate(o.child, d - 1, rng);
            }
        }
        Node& node = nodes_[h];
        Edge& e = node.edges[a];
        ++node.visits;
        ++e.visits;
        e.q += (total - e.q) / static_cast<double>(e.visits);
        if (cfg_.audit) {
            e.returns.push_back(total);
            result_.invariant_violations += edge_violations(e);
            if (static_cast<double>(node.edges.size()) >
                std::ceil(widening_limit(cfg_.k_action, node.visits, cfg_.alpha_action))) {
                ++result_.invariant_violations;
            }
        }
        return total;
    }

    PushAction random_action(Rng& rng) const {
        std::uniform_real_distribution<double> angle(0.0, kTwoPi);
        return PushAction::toward(angle(rng), cfg_.speed, cfg_.travel);
    }

private:
    std::size_t widen_actions(std::size_t h, Rng& rng) {
        Node& n = nodes_[h];
        if (static_cast<double>(n.edges.size()) <= widening_limit(cfg_.k_action, n.visits, cfg_.alpha_action)) {
            Edge e;
            e.action = random_action(rng);
            n.edges.push_back(std::move(e));
            return n.edges.size() - 1;
        }
        return ucb_select(n.edges, n.visits, cfg_.ucb_c);
    }

public:
    /// Unvisited edges first, then the highest q + c sqrt(log N / n); ties keep the lower index.
    static std::size_t ucb_select(const std::vector<Edge>& edges, std::size_t parent_visits, double c) {
        const double log_n = std::log(static_cast<double>(parent_visits));
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const Edge& e = edges[i];
            if (e.visits == 0) {
                return i;
            }
            const double score = e.q + c * std::sqrt(log_n / static_cast<double>(e.visits));
            if (score > best_score) {
                best_score = score;
                best = i;
            }
        }
        return best;
    }

private:
    std::size_t edge_violations(const Edge& e) const {
        std::size_t bad = 0;
        if (static_cast<double>(e.outcomes.size()) > std::ceil(widening_limit(1.0, e.visits, cfg_.alpha_obs)) &&
            e.visits > 0) {
            ++bad;
        }
        if (cfg_.audit && e.returns.size() == e.visits && e.visits > 0) {
            double sum = 0.0;
            for (double r : e.returns) {
                sum += r;
            }
            const double mean = sum / static_cast<double>(e.visits);
            if (std::abs(mean - e.q) > 1e-9 * std::max(1.0, std::abs(mean))) {
                ++bad;
            }
        }
        return bad;
    }

    Backend& backend_;
    PlannerConfig cfg_;
    std::vector<Node> nodes_;
    PlanResult result_;
};

/// Learned-belief backend: node beliefs are push histories decoded through the PNP.
class NptBackend {
public:
    struct Belief {
        Pose2D pose;
        History history;
        /// Encoder output for `history`, filled on first expansion.
        std::optional<LatentDist> latent;
    };
    struct RolloutState {
        Pose2D pose;
        std::vector<double> z;
    };
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

    NptBackend(const PnpInference& model, const Scenario& scenario) : model_(model), scenario_(scenario) {}

    /// Samples z from the node's latent, then an outcome from the decoder. Rollouts below
    /// the new child keep that z rather than re-encoding.
    Expansion expand(Belief& parent, const PushAction& action, Rng& rng) const;
    Step rollout_step(RolloutState& s, const PushAction& action, Rng& rng) const;

private:
    const PnpInference& model_;
    const Scenario& scenario_;
};

/// Particle-filter backend over the hidden center of mass.
struct PftModel {
    BlockSpec geometry;
    ObsModel obs;
    NoiseSpec noise;
    SimulatorConfig sim;
};

class PftBackend {
public:
    struct Belief {
        ParticleBelief particles;
    };
    struct RolloutState {
        Pose2D pose;
        BlockSpec block;
    };
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

    PftBackend(const PftModel& model, const Scenario& scenario) : model_(model), scenario_(scenario) {}

    /// Samples a center of mass from the belief, simulates the push with noise, and
    /// reweights every active particle on the result. Rollouts keep the sampled COM.
    Expansion expand(Belief& parent, const PushAction& action, Rng& rng) const;
    Step rollout_step(RolloutState& s, const PushAction& action, Rng& rng) const;

private:
    const PftModel& model_;
    const Scenario& scenario_;
};

PlanResult plan_npt(const PnpInference& model, const Scenario& scenario, const Pose2D& pose, const History& history,
                    const PlannerConfig& cfg, Rng& rng);
PlanResult plan_pft(const PftModel& model, const Scenario& scenario, const ParticleBelief& belief,
                    const PlannerConfig& cfg, Rng& rng);

class NptPolicy : public Policy {
public:
    NptPolicy(std::shared_ptr<const PnpInference> model, const PlannerConfig& cfg);

    std::string name() const override { return "NPT"; }
    void reset(const Scenario& scenario, const Pose2D& start) override;
    PushAction act(const Pose2D& current, Rng& rng) override;
    void observe(const Pose2D& before, const PushAction& action, const Pose2D& after) override;
    std::size_t simulate_calls() const override { return calls_; }

    const History& history() const { return history_; }
    const PlanResult& last_plan() const { return last_; }

private:
    std::shared_ptr<const PnpInference> model_;
    PlannerConfig cfg_;
    Scenario scenario_;
    History history_;
    std::size_t calls_ = 0;
    PlanResult last_;
};

class PftPolicy : public Policy {
public:
    PftPolicy(std::size_t particles, const PftModel& model, const PlannerConfig& cfg);

    std::string name() const override { return "PFT" + std::to_string(n_); }
    void reset(const Scenario& scenario, const Pose2D& start) override;
    PushAction act(const Pose2D& current, Rng& rng) override;
    void observe(const Pose2D& before, const PushAction& action, const Pose2D& after) override;
    std::size_t simulate_calls() const override { return calls_; }

    const ParticleBelief& belief() const { return belief_; }
    const PlanResult& last_plan() const { return last_; }

private:
    std::size_t n_;
    PftModel model_;
    PlannerConfig cfg_;
    Scenario scenario_;
    Pose2D start_;
    ParticleBelief belief_;
    bool initialized_ = false;
    /// Drives prior sampling and real-step resampling; seeded from the first act() call.
    Rng filter_rng_;
    std::size_t calls_ = 0;
    PlanResult last_;
};

}  // namespace pushpomdp
