#pragma once

// Cubature-rule moment propagation.
//
// Forward direction: third-degree spherical-radial cubature update of a map
// component through the measurement model. Inverse direction: measurement
// space cubature points pushed through an iterative ML inversion of h to give
// the mean and covariance of a measurement-driven birth.

#include "coopslam/gaussian_mixture.hpp"
#include "coopslam/geometry.hpp"

#include <array>
#include <limits>
#include <optional>
#include <vector>

namespace coopslam {

template <int D>
using CubaturePoints = std::array<Eigen::Matrix<double, D, 1>, 2 * D>;

/// mean +/- sqrt(D) * G e_i with G G^T = cov; points 0..D-1 are the + side.
template <int D>
CubaturePoints<D> cubature_points(const Eigen::Matrix<double, D, 1>& mean,
                                  const Eigen::Matrix<double, D, D>& cov) {
    Eigen::LLT<Eigen::Matrix<double, D, D>> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("cubature_points: covariance not positive definite");
    const Eigen::Matrix<double, D, D> G = llt.matrixL();
    const double scale = std::sqrt(static_cast<double>(D));
    CubaturePoints<D> pts;
    for (int i = 0; i < D; ++i) {
        pts[i] = mean + scale * G.col(i);
        pts[D + i] = mean - scale * G.col(i);
    }
    return pts;
}

/// Moments needed to update one map component with any measurement.
struct UpdateComponents {
    Vec5 z_pred = Vec5::Zero();  // predicted measurement
    Mat5 s_zz = Mat5::Zero();    // innovation covariance, includes the noise
    Mat35 s_xz = Mat35::Zero();  // state/measurement cross covariance
    Mat35 gain = Mat35::Zero();
    Mat3 p_post = Mat3::Zero();
};

/// Cubature update through an arbitrary measurement function.
/// `h` maps Vec3 -> Vec5. When `wrap` is set, angle rows of the cubature
/// spreads are wrapped relative to the predicted measurement.
template <class MeasFn>
UpdateComponents cubature_update(const Vec3& mean, const Mat3& cov, MeasFn&& h, const Mat5& noise,
                                 bool wrap = true) {
    const CubaturePoints<3> X = cubature_points<3>(mean, cov);
    std::array<Vec5, 6> Z;
    for (std::size_t c = 0; c < Z.size(); ++c) Z[c] = h(X[c]);

    const double inv_n = 1.0 / 6.0;
    UpdateComponents u;
    // mean of the angle rows taken relative to the first point so that a
    // spread straddling +/-pi averages correctly
    Vec5 acc = Vec5::Zero();
    for (const auto& z : Z) acc += wrap ? measurement_residual(z, Z[0]) : Vec5(z - Z[0]);
    u.z_pred = Z[0] + acc * inv_n;
    if (wrap) u.z_pred = wrap_measurement(u.z_pred);

    Vec3 x_mean = Vec3::Zero();
    for (const auto& x : X) x_mean += x;
    x_mean *= inv_n;

    for (std::size_t c = 0; c < Z.size(); ++c) {
        const Vec5 dz = wrap ? measurement_residual(Z[c], u.z_pred) : Vec5(Z[c] - u.z_pred);
        const Vec3 dx = X[c] - x_mean;
        u.s_zz += dz * dz.transpose();
        u.s_xz += dx * dz.transpose();
    }
    u.s_zz = u.s_zz * inv_n + noise;
    u.s_zz = 0.5 * (u.s_zz + u.s_zz.transpose()).eval();
    u.s_xz *= inv_n;

    Eigen::LLT<Mat5> llt(u.s_zz);
    if (llt.info() != Eigen::Success) throw NumericError("cubature_update: innovation covariance not PD");
    // K = S_xz S_zz^{-1}  <=>  S_zz K^T = S_xz^T
    u.gain = llt.solve(u.s_xz.transpose()).transpose();
    u.p_post = symmetrize(cov - u.gain * u.s_zz * u.gain.transpose());
    return u;
}

/// CKF update components of a map component of type `kind` seen from `state`.
/// A BS component is a Dirac: no spread, S_zz equals the noise.
inline UpdateComponents update_components(const GaussianComponent& comp, const VehicleState& state,
                                          SourceType kind, const Vec3& bs, const Mat5& noise) {
    if (kind == SourceType::BS) {
        UpdateComponents u;
        u.z_pred = measure(SourceType::BS, comp.mean, state, bs).values;
        u.s_zz = noise;
        return u;
    }
    return cubature_update(
        comp.mean, comp.cov, [&](const Vec3& x) { return measure(kind, x, state, bs).values; }, noise);
}

// ---------------------------------------------------------------------------
// Inverse direction (measurement -> birth)

/// Damping used when mixing the Gauss-Newton target into the iterate.
inline constexpr double kMlStepMixing = 0.2;
inline constexpr int kMlMaxIterations = 50;

/// Closed-form back-projection of a measurement to a source location.
/// VA: vehicle + (range - bias) along the DOA ray. SP: point on the DOA ray
/// whose BS-to-point-to-vehicle path length matches the bias-free range.
inline std::optional<Vec3> back_project(const Vec5& z, const VehicleState& s, SourceType kind,
                                        const Vec3& bs) {
    const double path = z[kRange] - s.clock_bias;
    if (!(path > 0.0)) return std::nullopt;
    const Vec3 d = direction(z[kDoaAz] + s.heading, z[kDoaEl]);
    if (kind == SourceType::VA) return Vec3(s.position + path * d);
    if (kind == SourceType::SP) {
        // |v + t d - bs| = path - t
        const Vec3 w = s.position - bs;
        const double denom = 2.0 * (w.dot(d) + path);
        if (!(denom > 1e-9 * path)) return std::nullopt;
        const double t = (path * path - w.squaredNorm()) / denom;
        if (!(t > 0.0) || !(t < path)) return std::nullopt;
        return Vec3(s.position + t * d);
    }
    return bs;
}

/// Weighted squared residual (h(x) - z)^T W (h(x) - z); +inf if h is undefined.
inline double ml_cost(const Vec3& x, const Vec5& z, const VehicleState& s, SourceType kind, const Vec3& bs,
                      const Mat5& info, Vec5* h_out = nullptr) {
    try {
        const Vec5 h = measure(kind, x, s, bs).values;
        const Vec5 r = measurement_residual(h, z);
        if (h_out) *h_out = h;
        const double c = r.dot(info * r);
        return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
    } catch (const GeometryError&) {
        return std::numeric_limits<double>::infinity();
    }
}

/// Iterative ML inversion of one measurement-space point.
///
/// Damped Gauss-Newton on the weighted residual: each step linearises h with a
/// finite-difference Jacobian, solves the weighted normal equations and moves
/// a fraction kMlStepMixing of the way to that solution. Iteration stops on the
/// first cost increase (the previous iterate is returned) or after
/// kMlMaxIterations. Returns nullopt if the starting cost is not finite.
inline std::optional<Vec3> iterative_ml_point_info(const Vec5& z_c, const VehicleState& s, SourceType kind,
                                                   const Vec3& bs, const Mat5& info,
                                                   int max_iterations = kMlMaxIterations,
                                                   std::vector<double>* cost_trace = nullptr) {
    const auto init = back_project(z_c, s, kind, bs);
    if (!init) return std::nullopt;
    Vec3 x = *init;
    Vec5 h;
    double cost = ml_cost(x, z_c, s, kind, bs, info, &h);
    if (!std::isfinite(cost)) return std::nullopt;
    if (cost_trace) cost_trace->push_back(cost);
    for (int it = 0; it < max_iterations; ++it) {
        Mat53 H;
        try {
            H = jacobian(x, s, kind, bs);
        } catch (const GeometryError&) {
            break;
        }
        const Vec5 r = measurement_residual(h, z_c);
        const Eigen::Matrix<double, 3, 5> HtW = H.transpose() * info;
        const Mat3 normal = HtW * H;
        Mat3 normal_inv;
        bool invertible = false;
        normal.computeInverseWithCheck(normal_inv, invertible, 0.0);
        if (!invertible) break;
        const Vec3 step = -(normal_inv * (HtW * r));
        if (!step.allFinite()) break;
        const Vec3 next = x + kMlStepMixing * step;
        Vec5 h_next;
        const double next_cost = ml_cost(next, z_c, s, kind, bs, info, &h_next);
        if (!(next_cost <= cost)) break;
        x = next;
        h = h_next;
        cost = next_cost;
        if (cost_trace) cost_trace->push_back(cost);
    }
    return x;
}

inline std::optional<Vec3> iterative_ml_point(const Vec5& z_c, const VehicleState& s, SourceType kind,
                                              const Vec3& bs, const Mat5& noise,
                                              int max_iterations = kMlMaxIterations,
                                              std::vector<double>* cost_trace = nullptr) {
    return iterative_ml_point_info(z_c, s, kind, bs, noise.inverse(), max_iterations, cost_trace);
}

/// Birth mean and covariance for measurement `z` under source type `kind`.
/// nullopt when any cubature point cannot be inverted.
inline std::optional<GaussianComponent> invert_measurement(const Vec5& z, const VehicleState& s,
                                                           SourceType kind, const Vec3& bs,
                                                           const Mat5& noise) {
    const CubaturePoints<5> Zc = cubature_points<5>(z, noise);
    const Mat5 info = noise.inverse();
    std::array<Vec3, 10> xs;
    for (std::size_t c = 0; c < Zc.size(); ++c) {
        const auto x = iterative_ml_point_info(wrap_measurement(Zc[c]), s, kind, bs, info);
        if (!x) return std::nullopt;
        xs[c] = *x;
    }
    GaussianComponent out;
    out.mean = Vec3::Zero();
    for (const auto& x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    out.cov = Mat3::Zero();
    for (const auto& x : xs) {
        const Vec3 d = x - out.mean;
        out.cov += d * d.transpose();
    }
    out.cov = symmetrize(out.cov / static_cast<double>(xs.size()));
    return out;
}

}  // namespace coopslam
