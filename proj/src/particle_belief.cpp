#include "pushpomdp/particle_belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pushpomdp {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

}  // namespace

double ObsModel::log_likelihood(const Pose2D& predicted, const Pose2D& observed) const {
    const double dx = (observed.x - predicted.x) / sigma_pos;
    const double dy = (observed.y - predicted.y) / sigma_pos;
    const double dyaw = wrap_angle(observed.yaw - predicted.yaw) / sigma_yaw;
    return -1.5 * kLogTwoPi - 2.0 * std::log(sigma_pos) - std::log(sigma_yaw) -
           0.5 * (dx * dx + dy * dy + dyaw * dyaw);
}

double ObsModel::likelihood(const Pose2D& predicted, const Pose2D& observed) const {
    return std::exp(log_likelihood(predicted, observed));
}

void ObsModel::validate() const {
    if (!(sigma_pos > 0.0 && sigma_yaw > 0.0)) {
        throw std::invalid_argument("observation model sigmas must be positive");
    }
}

std::size_t ParticleBelief::active_count() const {
    return static_cast<std::size_t>(
        std::count_if(particles.begin(), particles.end(), [](const Particle& p) { return p.active; }));
}

double ParticleBelief::effective_sample_size() const {
    double s2 = 0.0;
    for (const Particle& p : particles) {
        if (p.active) {
            s2 += p.weight * p.weight;
        }
    }
    return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

Vec2 ParticleBelief::mean_com() const {
    Vec2 m;
    for (const Particle& p : particles) {
        if (p.active) {
            m = m + p.com * p.weight;
        }
    }
    return m;
}

ParticleBelief init_prior(std::size_t n, const BlockSpec& block, Rng& rng, const Pose2D& pose) {
    if (n == 0) {
        throw std::invalid_argument("particle belief needs at least one particle");
    }
    ParticleBelief b;
    b.pose = pose;
    b.particles.reserve(n);
    const double w = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        b.particles.push_back({sample_com_uniform(block, rng), w, true});
    }
    return b;
}

bool reweight(ParticleBelief& belief, std::span<const double> log_likelihoods) {
    if (log_likelihoods.size() != belief.particles.size()) {
        throw std::invalid_argument("one log-likelihood per particle required");
    }
    // Work in log space: a sharp observation model underflows plain products.
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logw(belief.particles.size(), 0.0);
    for (std::size_t i = 0; i < belief.particles.size(); ++i) {
        const Particle& p = belief.particles[i];
        if (!p.active) {
            continue;
        }
        logw[i] = std::log(p.weight) + log_likelihoods[i];
        if (std::isfinite(logw[i])) {
            max_log = std::max(max_log, logw[i]);
        }
    }
    if (!std::isfinite(max_log)) {
        for (Particle& p : belief.particles) {
            p.active = false;
            p.weight = 0.0;
        }
        return false;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < belief.particles.size(); ++i) {
        Particle& p = belief.particles[i];
        if (p.active) {
            p.weight = std::isfinite(logw[i]) ? std::exp(logw[i] - max_log) : 0.0;
            total += p.weight;
        }
    }
    double kept = 0.0;
    for (Particle& p : belief.particles) {
        if (!p.active) {
            continue;
        }
        p.weight /= total;
        if (p.weight < kDeactivationThreshold) {
            p.active = false;
            p.weight = 0.0;
        } else {
            kept += p.weight;
        }
    }
    if (kept <= 0.0) {
        return false;
    }
    for (Particle& p : belief.particles) {
        if (p.active) {
            p.weight /= kept;
        }
    }
    return true;
}

ParticleBelief update(ParticleBelief belief, const PushAction& action, const Pose2D& observed,
                      const BlockSpec& geometry, const ObsModel& obs, const SimulatorConfig& sim,
                      UpdateMode mode, Rng& rng) {
    std::vector<double> loglik(belief.particles.size(), 0.0);
    BlockSpec hypothesis = geometry;
    for (std::size_t i = 0; i < belief.particles.size(); ++i) {
        const Particle& p = belief.particles[i];
        if (!p.active) {
            continue;
        }
        hypothesis.com = p.com;
        const Pose2D predicted = integrate_push(belief.pose, hypothesis, action, sim);
        loglik[i] = obs.log_likelihood(predicted, observed);
    }
    if (!reweight(belief, loglik)) {
        ParticleBelief fresh = init_prior(belief.particles.size(), geometry, rng, observed);
        fresh.diverged = true;
        return fresh;
    }
    belief.pose = observed;
    if (mode == UpdateMode::real_step) {
        const double n_active = static_cast<double>(belief.active_count());
        if (belief.effective_sample_size() < 0.5 * n_active) {
            resample_active(belief, rng);
        }
    }
    return belief;
}

void resample_active(ParticleBelief& belief, Rng& rng) {
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < belief.particles.size(); ++i) {
        if (belief.particles[i].active) {
            slots.push_back(i);
        }
    }
    if (slots.empty()) {
        return;
    }
    const double m = static_cast<double>(slots.size());
    std::uniform_real_distribution<double> u(0.0, 1.0 / m);
    double pos = u(rng);
    std::vector<Vec2> picked;
    picked.reserve(slots.size());
    std::size_t k = 0;
    double cum = belief.particles[slots[0]].weight;
    for (std::size_t j = 0; j < slots.size(); ++j) {
        while (pos > cum && k + 1 < slots.size()) {
            ++k;
            cum += belief.particles[slots[k]].weight;
        }
        picked.push_back(belief.particles[slots[k]].com);
        pos += 1.0 / m;
    }
    for (std::size_t j = 0; j < slots.size(); ++j) {
        belief.particles[slots[j]].com = picked[j];
        belief.particles[slots[j]].weight = 1.0 / m;
    }
}

Vec2 sample_com(const ParticleBelief& belief, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double target = u(rng);
    double cum = 0.0;
    const Particle* last_active = nullptr;
    for (const Particle& p : belief.particles) {
        if (!p.active) {
            continue;
        }
        last_active = &p;
        cum += p.weight;
        if (target < cum) {
            return p.com;
        }
    }
    if (last_active == nullptr) {
        throw std::logic_error("sample_com on a belief with no active particles");
    }
    return last_active->com;
}

}  // namespace pushpomdp
