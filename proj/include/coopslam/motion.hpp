#pragma once

#include "coopslam/types.hpp"

#include <random>

namespace coopslam {

/// Vehicle state: 3D position, heading, translation speed, turn rate and
/// receiver clock bias (expressed in meters, i.e. already multiplied by c).
struct VehicleState {
    Vec3 position = Vec3::Zero();
    double heading = 0.0;     // rad
    double speed = 0.0;       // m/s
    double turn_rate = 0.0;   // rad/s
    double clock_bias = 0.0;  // m

    bool operator==(const VehicleState&) const = default;
};

/// Standard deviations of the additive process noise. The covariance is
/// diag[sx^2, sy^2, 0, sh^2, 0, 0, sb^2]; speed, turn rate and height are
/// carried without noise.
struct ProcessNoiseSpec {
    double sigma_x = 0.0;        // m
    double sigma_y = 0.0;        // m
    double sigma_heading = 0.0;  // rad
    double sigma_bias = 0.0;     // m
};

/// Below this turn rate the coordinated-turn displacement switches to its
/// series expansion around zero.
inline constexpr double kTurnRateEpsilon = 1e-6;

/// Deterministic coordinated-turn (CTRV) step over `dt` seconds.
inline VehicleState transition(const VehicleState& s, double dt) {
    VehicleState out = s;
    const double a = s.heading;
    const double w = s.turn_rate;
    double dx = 0.0;
    double dy = 0.0;
    if (std::abs(w) < kTurnRateEpsilon) {
        // second-order expansion of the exact displacement in w
        const double d = s.speed * dt;
        dx = d * (std::cos(a) - 0.5 * w * dt * std::sin(a));
        dy = d * (std::sin(a) + 0.5 * w * dt * std::cos(a));
    } else {
        const double r = s.speed / w;
        dx = r * (std::sin(a + w * dt) - std::sin(a));
        dy = r * (-std::cos(a + w * dt) + std::cos(a));
    }
    out.position.x() += dx;
    out.position.y() += dy;
    out.heading = wrap_angle(a + w * dt);
    return out;
}

/// Draws s_k ~ N(transition(s_{k-1}), Q).
template <class Rng>
VehicleState sample_transition(const VehicleState& s, double dt, const ProcessNoiseSpec& q, Rng& rng) {
    VehicleState out = transition(s, dt);
    std::normal_distribution<double> n01(0.0, 1.0);
    // draw order is part of the reproducibility contract
    const double ex = n01(rng);
    const double ey = n01(rng);
    const double eh = n01(rng);
    const double eb = n01(rng);
    out.position.x() += q.sigma_x * ex;
    out.position.y() += q.sigma_y * ey;
    out.heading = wrap_angle(out.heading + q.sigma_heading * eh);
    out.clock_bias += q.sigma_bias * eb;
    return out;
}

}  // namespace coopslam
