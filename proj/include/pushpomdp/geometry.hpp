#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace pushpomdp {

using Rng = std::mt19937_64;

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator-() const { return {-x, -y}; }
    bool operator==(const Vec2&) const = default;

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

/// Rotates `v` counter-clockwise by `angle` radians.
inline Vec2 rotate(const Vec2& v, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Maps an angle into [-pi, pi).
double wrap_angle(double angle);

/// Maps an angle into [0, 2pi).
double wrap_angle_positive(double angle);

/// Planar block pose. (x, y) is the geometric center of the footprint.
struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    static Pose2D make(double x, double y, double yaw) { return {x, y, wrap_angle(yaw)}; }

    Vec2 position() const { return {x, y}; }
    bool operator==(const Pose2D&) const = default;
};

/// A straight-line push. `theta` is the world-frame direction of pusher motion.
struct PushAction {
    double theta = 0.0;
    double speed = 0.10;
    double travel = 0.15;

    static PushAction toward(double theta, double speed = 0.10, double travel = 0.15) {
        return {wrap_angle_positive(theta), speed, travel};
    }

    Vec2 direction() const { return {std::cos(theta), std::sin(theta)}; }
    double duration() const { return travel / speed; }
    void validate() const;
};

/// Rigid rectangular block. The center of mass is hidden from the planner.
struct BlockSpec {
    Vec2 half_extents{0.0125, 0.0125};
    double height = 0.015;
    double mass = 0.2;
    Vec2 com{0.0, 0.0};

    BlockSpec with_com(Vec2 c) const {
        BlockSpec b = *this;
        b.com = c;
        return b;
    }

    bool com_inside() const {
        return std::abs(com.x) < half_extents.x && std::abs(com.y) < half_extents.y;
    }
    void validate() const;
};

struct Twist2D {
    double vx = 0.0;
    double vy = 0.0;
    double omega = 0.0;
};

/// Zero-mean Gaussian perturbation applied to the final pose of a push.
struct NoiseSpec {
    double sigma_pos = 0.005;
    double sigma_yaw = 0.02;

    static NoiseSpec none() { return {0.0, 0.0}; }
    void validate() const;
};

struct SimulatorConfig {
    /// Characteristic length of the ellipsoidal limit surface.
    double limit_surface_c = 0.01;
    int substeps = 20;

    void validate() const;
};

/// Body-frame point where the pusher meets the footprint, aimed at the geometric center.
Vec2 contact_point(const Pose2D& pose, const BlockSpec& block, const PushAction& action);

/// Sticking point-contact motion under an ellipsoidal limit surface.
///
/// `contact_r` is the contact point relative to the center of mass and `push_dir`
/// the unit pusher direction, both in the same frame; the returned twist is the
/// center-of-mass velocity and rotation rate in that frame.
Twist2D quasi_static_twist(Vec2 contact_r, Vec2 push_dir, double speed, double c);

/// Integrates one push with the contact held fixed in the body frame (classical
/// RK4 over `cfg.substeps` substeps). Deterministic; no noise.
Pose2D integrate_push(const Pose2D& pose, const BlockSpec& block, const PushAction& action,
                      const SimulatorConfig& cfg = {}, std::vector<Twist2D>* trace = nullptr);

/// Ground-truth transition: deterministic push followed by Gaussian pose noise.
Pose2D simulate_push(const Pose2D& pose, const BlockSpec& block, const PushAction& action,
                     const NoiseSpec& noise, Rng& rng, const SimulatorConfig& cfg = {});

/// Uniform sample over the open footprint rectangle.
Vec2 sample_com_uniform(const BlockSpec& block, Rng& rng);

}  // namespace pushpomdp
