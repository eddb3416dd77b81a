#include "pushpomdp/planner.hpp"

namespace pushpomdp {

namespace {

bool is_terminal(const Scenario& scenario, const Pose2D& pose) {
    const Vec2 p = pose.position();
    return scenario.fallen(p) || scenario.in_range(p);
}

}  // namespace

void Budget::validate() const {
    if (kind == Kind::seconds && !(seconds >= 0.0 && std::isfinite(seconds))) {
        throw std::invalid_argument("budget seconds must be finite and >= 0");
    }
}

void PlannerConfig::validate() const {
    if (depth < 1) {
        throw std::invalid_argument("planner depth must be >= 1");
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("planner gamma must lie in (0, 1]");
    }
    if (!(alpha_obs > 0.0 && alpha_obs < 1.0) || !(alpha_action > 0.0 && alpha_action < 1.0)) {
        throw std::invalid_argument("widening exponents must lie in (0, 1)");
    }
    if (!(k_action > 0.0) || !(ucb_c >= 0.0)) {
        throw std::invalid_argument("k_action must be > 0 and ucb_c >= 0");
    }
    if (!(speed > 0.0) || !(travel > 0.0)) {
        throw std::invalid_argument("planner speed and travel must be positive");
    }
    budget.validate();
}

NptBackend::Expansion NptBackend::expand(Belief& parent, const PushAction& action, Rng& rng) const {
    if (!parent.latent) {
        parent.latent = model_.encode(parent.history);
    }
    const LatentDist& lat = *parent.latent;
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> z(lat.mean.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = lat.mean[i] + lat.std[i] * n01(rng);
    }
    PushRecord rec;
    rec.action = body_action(parent.pose, action);
    const OutcomeDist od = model_.decode(z, rec.action);
    for (std::size_t j = 0; j < 3; ++j) {
        rec.outcome[j] = od.mean[j] + od.std[j] * n01(rng);
    }
    rec.outcome[2] = wrap_angle(rec.outcome[2]);

    Expansion ex;
    ex.child.pose = apply_outcome(parent.pose, rec.outcome);
    ex.child.history = parent.history;
    ex.child.history.push(rec);
    // A full keep-first history does not change, so the parent's encoding still applies.
    if (ex.child.history.size() == parent.history.size() &&
        parent.history.policy() == HistoryCapPolicy::keep_first) {
        ex.child.latent = parent.latent;
    }
    ex.reward = reward(ex.child.pose.position(), scenario_);
    ex.terminal = is_terminal(scenario_, ex.child.pose);
    ex.rollout = {ex.child.pose, std::move(z)};
    return ex;
}

NptBackend::Step NptBackend::rollout_step(RolloutState& s, const PushAction& action, Rng& rng) const {
    std::normal_distribution<double> n01(0.0, 1.0);
    const OutcomeDist od = model_.decode(s.z, body_action(s.pose, action));
    std::array<double, 3> o{};
    for (std::size_t j = 0; j < 3; ++j) {
        o[j] = od.mean[j] + od.std[j] * n01(rng);
    }
    o[2] = wrap_angle(o[2]);
    s.pose = apply_outcome(s.pose, o);
    return {reward(s.pose.position(), scenario_), is_terminal(scenario_, s.pose)};
}

PftBackend::Expansion PftBackend::expand(Belief& parent, const PushAction& action, Rng& rng) const {
    const ParticleBelief& b = parent.particles;
    const BlockSpec block = model_.geometry.with_com(sample_com(b, rng));
    const Pose2D o = simulate_push(b.pose, block, action, model_.noise, rng, model_.sim);
    Expansion ex;
    ex.child.particles = update(b, action, o, model_.geometry, model_.obs, model_.sim, UpdateMode::tree, rng);
    ex.reward = reward(o.position(), scenario_);
    ex.terminal = is_terminal(scenario_, o);
    ex.rollout = {o, block};
    return ex;
}

PftBackend::Step PftBackend::rollout_step(RolloutState& s, const PushAction& action, Rng& rng) const {
    s.pose = simulate_push(s.pose, s.block, action, model_.noise, rng, model_.sim);
    return {reward(s.pose.position(), scenario_), is_terminal(scenario_, s.pose)};
}

PlanResult plan_npt(const PnpInference& model, const Scenario& scenario, const Pose2D& pose, const History& history,
                    const PlannerConfig& cfg, Rng& rng) {
    NptBackend backend(model, scenario);
    Dpw<NptBackend> dpw(backend, cfg);
    return dpw.plan(NptBackend::Belief{pose, history, std::nullopt}, rng);
}

PlanResult plan_pft(const PftModel& model, const Scenario& scenario, const ParticleBelief& belief,
                    const PlannerConfig& cfg, Rng& rng) {
    if (belief.active_count() == 0) {
        throw std::invalid_argument("plan_pft: belief has no active particles");
    }
    PftBackend backend(model, scenario);
    Dpw<PftBackend> dpw(backend, cfg);
    return dpw.plan(PftBackend::Belief{belief}, rng);
}

NptPolicy::NptPolicy(std::shared_ptr<const PnpInference> model, const PlannerConfig& cfg)
    : model_(std::move(model)), cfg_(cfg) {
    if (!model_) {
        throw std::invalid_argument("NptPolicy needs a model");
    }
    cfg_.validate();
    history_ = History(model_->config().history_cap, model_->config().cap_policy);
}

void NptPolicy::reset(const Scenario& scenario, const Pose2D&) {
    scenario_ = scenario;
    history_ = History(model_->config().history_cap, model_->config().cap_policy);
    calls_ = 0;
    last_ = PlanResult{};
}

PushAction NptPolicy::act(const Pose2D& current, Rng& rng) {
    last_ = plan_npt(*model_, scenario_, current, history_, cfg_, rng);
    calls_ += last_.simulate_calls;
    return last_.action;
}

void NptPolicy::observe(const Pose2D& before, const PushAction& action, const Pose2D& after) {
    history_.push(PushRecord::from_poses(before, action, after));
}

PftPolicy::PftPolicy(std::size_t particles, const PftModel& model, const PlannerConfig& cfg)
    : n_(particles), model_(model), cfg_(cfg) {
    if (n_ == 0) {
        throw std::invalid_argument("PftPolicy needs at least one particle");
    }
    cfg_.validate();
    model_.geometry.validate();
    model_.obs.validate();
}

void PftPolicy::reset(const Scenario& scenario, const Pose2D& start) {
    scenario_ = scenario;
    start_ = start;
    initialized_ = false;
    calls_ = 0;
    last_ = PlanResult{};
}

PushAction PftPolicy::act(const Pose2D& current, Rng& rng) {
    if (!initialized_) {
        filter_rng_.seed(rng());
        belief_ = init_prior(n_, model_.geometry, filter_rng_, start_);
        initialized_ = true;
    }
    belief_.pose = current;
    last_ = plan_pft(model_, scenario_, belief_, cfg_, rng);
    calls_ += last_.simulate_calls;
    return last_.action;
}

void PftPolicy::observe(const Pose2D&, const PushAction& action, const Pose2D& after) {
    if (!initialized_) {
        throw std::logic_error("PftPolicy::observe called before act");
    }
    belief_ = update(std::move(belief_), action, after, model_.geometry, model_.obs, model_.sim,
                     UpdateMode::real_step, filter_rng_);
}

}  // namespace pushpomdp
