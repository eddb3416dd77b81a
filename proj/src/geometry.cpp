#include "pushpomdp/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace pushpomdp {

double wrap_angle(double angle) {
    double a = std::fmod(angle + kPi, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    a -= kPi;
    // fmod can land exactly on +pi after the shift for inputs like -pi - tiny.
    if (a >= kPi) {
        a -= kTwoPi;
    }
    return a;
}

double wrap_angle_positive(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    if (a >= kTwoPi) {
        a = 0.0;
    }
    return a;
}

void PushAction::validate() const {
    if (!(theta >= 0.0 && theta < kTwoPi)) {
        throw std::invalid_argument("push theta must lie in [0, 2pi), got " + std::to_string(theta));
    }
    if (!(speed > 0.0) || !std::isfinite(speed)) {
        throw std::invalid_argument("push speed must be positive");
    }
    if (!(travel > 0.0) || !std::isfinite(travel)) {
        throw std::invalid_argument("push travel must be positive");
    }
}

void BlockSpec::validate() const {
    if (!(half_extents.x > 0.0 && half_extents.y > 0.0 && height > 0.0)) {
        throw std::invalid_argument("block extents must be positive");
    }
    if (!(mass > 0.0)) {
        throw std::invalid_argument("block mass must be positive");
    }
    if (!com_inside()) {
        throw std::invalid_argument("block center of mass must lie strictly inside the footprint");
    }
}

void NoiseSpec::validate() const {
    if (!(sigma_pos >= 0.0 && sigma_yaw >= 0.0)) {
        throw std::invalid_argument("noise sigmas must be non-negative");
    }
}

void SimulatorConfig::validate() const {
    if (!(limit_surface_c > 0.0)) {
        throw std::invalid_argument("limit surface length c must be positive");
    }
    if (substeps < 1) {
        throw std::invalid_argument("substeps must be at least 1");
    }
}

Vec2 contact_point(const Pose2D& pose, const BlockSpec& block, const PushAction& action) {
    const Vec2 u = rotate(action.direction(), -pose.yaw);
    const double inf = std::numeric_limits<double>::infinity();
    const double tx = std::abs(u.x) > 0.0 ? block.half_extents.x / std::abs(u.x) : inf;
    const double ty = std::abs(u.y) > 0.0 ? block.half_extents.y / std::abs(u.y) : inf;
    // The pusher arrives from behind, so the touched face is hit by the ray along -u.
    return u * -std::min(tx, ty);
}

Twist2D quasi_static_twist(Vec2 r, Vec2 push_dir, double speed, double c) {
    if (!(c > 0.0)) {
        throw std::invalid_argument("limit surface length c must be positive");
    }
    const double c2 = c * c;
    const Vec2 vp = push_dir * speed;
    const double den = c2 + r.x * r.x + r.y * r.y;
    Twist2D t;
    t.vx = ((c2 + r.x * r.x) * vp.x + r.x * r.y * vp.y) / den;
    t.vy = (r.x * r.y * vp.x + (c2 + r.y * r.y) * vp.y) / den;
    t.omega = (r.x * t.vy - r.y * t.vx) / c2;
    return t;
}

namespace {

struct Derivative {
    Vec2 v;
    double omega;
};

}  // namespace

Pose2D integrate_push(const Pose2D& pose, const BlockSpec& block, const PushAction& action,
                      const SimulatorConfig& cfg, std::vector<Twist2D>* trace) {
    const Vec2 contact = contact_point(pose, block, action);
    const Vec2 r_body = contact - block.com;
    const Vec2 u_world = action.direction();
    const double c = cfg.limit_surface_c;

    // The body-frame twist depends on yaw only, through the world-fixed push direction.
    auto eval = [&](double yaw) {
        const double cy = std::cos(yaw);
        const double sy = std::sin(yaw);
        const Vec2 u_body{cy * u_world.x + sy * u_world.y, -sy * u_world.x + cy * u_world.y};
        const Twist2D tb = quasi_static_twist(r_body, u_body, action.speed, c);
        if (trace != nullptr) {
            trace->push_back(tb);
        }
        return Derivative{{cy * tb.vx - sy * tb.vy, sy * tb.vx + cy * tb.vy}, tb.omega};
    };

    Vec2 com_world = pose.position() + rotate(block.com, pose.yaw);
    double yaw = pose.yaw;
    const double dt = action.duration() / cfg.substeps;
    for (int i = 0; i < cfg.substeps; ++i) {
        const Derivative k1 = eval(yaw);
        const Derivative k2 = eval(yaw + 0.5 * dt * k1.omega);
        const Derivative k3 = eval(yaw + 0.5 * dt * k2.omega);
        const Derivative k4 = eval(yaw + dt * k3.omega);
        com_world = com_world + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * (dt / 6.0);
        yaw += dt * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega) / 6.0;
    }
    const Vec2 center = com_world - rotate(block.com, yaw);
    return Pose2D::make(center.x, center.y, yaw);
}

Pose2D simulate_push(const Pose2D& pose, const BlockSpec& block, const PushAction& action,
                     const NoiseSpec& noise, Rng& rng, const SimulatorConfig& cfg) {
    Pose2D out = integrate_push(pose, block, action, cfg);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double ex = gauss(rng);
    const double ey = gauss(rng);
    const double eyaw = gauss(rng);
    out.x += noise.sigma_pos * ex;
    out.y += noise.sigma_pos * ey;
    out.yaw = wrap_angle(out.yaw + noise.sigma_yaw * eyaw);
    return out;
}

Vec2 sample_com_uniform(const BlockSpec& block, Rng& rng) {
    std::uniform_real_distribution<double> ux(-block.half_extents.x, block.half_extents.x);
    std::uniform_real_distribution<double> uy(-block.half_extents.y, block.half_extents.y);
    Vec2 c{ux(rng), uy(rng)};
    // The closed lower bound of uniform_real_distribution could touch the boundary.
    while (!(std::abs(c.x) < block.half_extents.x && std::abs(c.y) < block.half_extents.y)) {
        c = {ux(rng), uy(rng)};
    }
    return c;
}

}  // namespace pushpomdp
