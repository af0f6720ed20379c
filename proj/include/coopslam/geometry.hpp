#pragma once

// Noise-free channel-parameter model for the three source types.
//
// Measurement layout is [pseudorange; doa_el; doa_az; dod_el; dod_az].
// Delays are pseudoranges in meters and include the receiver clock bias.
// DOA is expressed in the vehicle frame (azimuth minus heading), DOD in the
// global frame at the base station.

#include "coopslam/motion.hpp"
#include "coopslam/types.hpp"

#include <algorithm>
#include <array>

namespace coopslam {

enum MeasurementIndex : int { kRange = 0, kDoaEl = 1, kDoaAz = 2, kDodEl = 3, kDodAz = 4 };

/// Entries of the measurement vector that are angles and need wrapping.
inline constexpr std::array<bool, 5> kAngleRows = {false, true, true, true, true};

struct Measurement {
    Vec5 values = Vec5::Zero();

    double range() const { return values[kRange]; }
    double doa_el() const { return values[kDoaEl]; }
    double doa_az() const { return values[kDoaAz]; }
    double dod_el() const { return values[kDodEl]; }
    double dod_az() const { return values[kDodAz]; }
};

/// a - b with the angle entries wrapped to (-pi, pi].
inline Vec5 measurement_residual(const Vec5& a, const Vec5& b) {
    Vec5 r = a - b;
    for (int i = 0; i < 5; ++i) {
        if (kAngleRows[i]) r[i] = wrap_angle(r[i]);
    }
    return r;
}

inline Vec5 wrap_measurement(Vec5 z) {
    for (int i = 0; i < 5; ++i) {
        if (kAngleRows[i]) z[i] = wrap_angle(z[i]);
    }
    return z;
}

namespace detail {

inline double elevation(double dz, double dist) {
    // asin of a ratio that may drift past 1 by rounding
    return std::asin(std::clamp(dz / dist, -1.0, 1.0));
}

inline void require_distinct(const Vec3& a, const Vec3& b, const char* what) {
    if (!((a - b).norm() > 0.0)) throw GeometryError(std::string("coincident points: ") + what);
}

}  // namespace detail

/// Specular incidence point on the surface that mirrors `bs` onto `va`,
/// i.e. where the segment va -> v crosses the reflecting plane.
inline Vec3 incidence_point(const Vec3& va, const Vec3& bs, const Vec3& v) {
    detail::require_distinct(bs, va, "virtual anchor equals base station");
    const Vec3 u = (bs - va).normalized();
    const Vec3 f = 0.5 * (bs + va);
    const Vec3 dir = v - va;
    const double denom = dir.dot(u);
    if (!(std::abs(denom) > 1e-12 * std::max(1.0, dir.norm()))) {
        throw GeometryError("vehicle-to-VA line is parallel to the reflecting plane");
    }
    return va + ((f - va).dot(u) / denom) * dir;
}

/// Inverse of incidence_point: reconstructs the VA from an incidence point.
inline Vec3 va_from_incidence(const Vec3& xs, const Vec3& bs, const Vec3& v) {
    const Vec3 d = xs - v;
    const double n = d.norm();
    if (!(n > 0.0)) throw GeometryError("incidence point coincides with the vehicle");
    return v + (n + (bs - xs).norm()) * (d / n);
}

/// h(x, s, m): noise-free measurement of a source of type `kind` at `loc`.
/// For the BS, `loc` is the BS position itself.
inline Measurement measure(SourceType kind, const Vec3& loc, const VehicleState& s, const Vec3& bs) {
    const Vec3& v = s.position;
    Measurement z;
    Vec5& h = z.values;
    switch (kind) {
        case SourceType::BS: {
            const Vec3 d = loc - v;
            const double dist = d.norm();
            if (!(dist > 0.0)) throw GeometryError("vehicle at the base station");
            h[kRange] = dist + s.clock_bias;
            h[kDoaEl] = detail::elevation(d.z(), dist);
            h[kDoaAz] = wrap_angle(std::atan2(d.y(), d.x()) - s.heading);
            h[kDodEl] = detail::elevation(-d.z(), dist);
            h[kDodAz] = wrap_angle(std::atan2(-d.y(), -d.x()));
            break;
        }
        case SourceType::VA: {
            const Vec3 xs = incidence_point(loc, bs, v);
            const Vec3 d = loc - v;
            const double dist = d.norm();
            const Vec3 e = xs - bs;
            const double es = e.norm();
            if (!(dist > 0.0) || !(es > 0.0)) throw GeometryError("degenerate VA geometry");
            h[kRange] = dist + s.clock_bias;
            h[kDoaEl] = detail::elevation(d.z(), dist);
            h[kDoaAz] = wrap_angle(std::atan2(d.y(), d.x()) - s.heading);
            h[kDodEl] = detail::elevation(e.z(), es);
            h[kDodAz] = wrap_angle(std::atan2(e.y(), e.x()));
            break;
        }
        case SourceType::SP: {
            const Vec3 d = loc - v;
            const double dist = d.norm();
            const Vec3 e = loc - bs;
            const double es = e.norm();
            if (!(dist > 0.0) || !(es > 0.0)) throw GeometryError("scatterer coincides with vehicle or BS");
            h[kRange] = es + dist + s.clock_bias;
            h[kDoaEl] = detail::elevation(d.z(), dist);
            h[kDoaAz] = wrap_angle(std::atan2(d.y(), d.x()) - s.heading);
            h[kDodEl] = detail::elevation(e.z(), es);
            h[kDodAz] = wrap_angle(std::atan2(e.y(), e.x()));
            break;
        }
    }
    return z;
}

inline Measurement measure(const Source& src, const VehicleState& s, const Vec3& bs) {
    return measure(src.kind, src.location, s, bs);
}

inline constexpr double kJacobianStep = 1e-3;

/// Central-difference Jacobian dh/dx of the measurement with respect to the
/// source location (5x3). Angle rows are differenced with wrapping.
inline Mat53 jacobian(const Vec3& loc, const VehicleState& s, SourceType kind, const Vec3& bs,
                      double step = kJacobianStep) {
    Mat53 H;
    for (int c = 0; c < 3; ++c) {
        Vec3 lp = loc;
        Vec3 lm = loc;
        lp[c] += step;
        lm[c] -= step;
        const Vec5 hp = measure(kind, lp, s, bs).values;
        const Vec5 hm = measure(kind, lm, s, bs).values;
        H.col(c) = measurement_residual(hp, hm) / (2.0 * step);
    }
    return H;
}

/// Unit direction with the given global azimuth and elevation.
inline Vec3 direction(double azimuth, double elevation) {
    return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
            std::sin(elevation)};
}

}  // namespace coopslam
