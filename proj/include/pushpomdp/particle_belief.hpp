#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pushpomdp/geometry.hpp"

namespace pushpomdp {

/// Normalized weight below which a particle is switched off for the rest of the episode.
constexpr double kDeactivationThreshold = 1e-9;

struct Particle {
    Vec2 com;
    double weight = 0.0;
    bool active = true;
};

/// Gaussian observation model on (dx, dy, wrapped dyaw).
struct ObsModel {
    double sigma_pos = 0.01;
    double sigma_yaw = 0.05;

    double log_likelihood(const Pose2D& predicted, const Pose2D& observed) const;
    double likelihood(const Pose2D& predicted, const Pose2D& observed) const;
    void validate() const;
};

struct ParticleBelief {
    std::vector<Particle> particles;
    /// Shared, fully observed block pose.
    Pose2D pose;
    /// Set when every particle died and the prior was restored.
    bool diverged = false;

    std::size_t active_count() const;
    double effective_sample_size() const;
    Vec2 mean_com() const;
};

enum class UpdateMode {
    /// Inside the search tree: reweight and deactivate only.
    tree,
    /// After a real push: additionally resample when the effective sample size drops.
    real_step,
};

ParticleBelief init_prior(std::size_t n, const BlockSpec& block, Rng& rng, const Pose2D& pose = {});

/// Multiplies active weights by exp(log_likelihoods[i]) (indexed over all particles),
/// renormalizes, and deactivates anything below kDeactivationThreshold.
/// Returns false when no particle survives.
bool reweight(ParticleBelief& belief, std::span<const double> log_likelihoods);

/// Bayes update on an observed push outcome. Each active particle predicts the outcome
/// with the noise-free simulator under its own center of mass.
ParticleBelief update(ParticleBelief belief, const PushAction& action, const Pose2D& observed,
                      const BlockSpec& geometry, const ObsModel& obs, const SimulatorConfig& sim,
                      UpdateMode mode, Rng& rng);

/// Systematic resampling restricted to active slots; inactive slots stay inactive.
void resample_active(ParticleBelief& belief, Rng& rng);

/// Draws an active particle's center of mass with probability proportional to its weight.
Vec2 sample_com(const ParticleBelief& belief, Rng& rng);

}  // namespace pushpomdp
