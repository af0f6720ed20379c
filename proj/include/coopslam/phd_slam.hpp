#pragma once

// Rao-Blackwellized multiple-model GM-PHD SLAM for one vehicle.
//
// Each particle carries a vehicle state hypothesis, a log-weight and a map
// intensity per source type conditioned on that hypothesis. One filter step
// is: predict -> birth_append -> update_maps -> update_log_weight ->
// (prune/merge) -> normalize -> estimate_state -> resample.

#include "coopslam/ckf.hpp"
#include "coopslam/gaussian_mixture.hpp"
#include "coopslam/geometry.hpp"
#include "coopslam/motion.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace coopslam {

enum class DetectionPolicy {
    at_mean,  // p_D evaluated at the component mean
    robust,   // minimum of p_D over the 95% highest-density region
};

/// Detection and clutter model shared by the filter and the simulator.
struct DetectionModel {
    double p_detect = 0.9;     // inside the field of view
    double fov_radius = 50.0;  // m, SP visibility range
    double clutter_rate = 1.0; // mean clutter returns per scan
    double max_range = 200.0;  // m, upper end of the clutter range support
    DetectionPolicy policy = DetectionPolicy::at_mean;

    /// Uniform clutter density over [0,R]x[-pi/2,pi/2]x[-pi,pi]x[-pi/2,pi/2]x[-pi,pi].
    double clutter_intensity() const { return clutter_rate / (4.0 * max_range * std::pow(kPi, 4)); }

    /// p_D(x, s, m). VAs and the BS are always in view; SPs within fov_radius.
    double p_detect_at(SourceType kind, const Vec3& x, const Vec3& vehicle) const {
        if (kind != SourceType::SP) return p_detect;
        return (x - vehicle).norm() <= fov_radius ? p_detect : 0.0;
    }

    /// Per-component detection probability according to `policy`.
    double p_detect_component(SourceType kind, const GaussianComponent& c, const Vec3& vehicle) const {
        if (kind != SourceType::SP || policy == DetectionPolicy::at_mean) return p_detect_at(kind, c.mean, vehicle);
        // chi-square(3) 95% quantile bounds the farthest point of the ellipsoid
        constexpr double kChi2Dof3Q95 = 7.814727903251178;
        Eigen::SelfAdjointEigenSolver<Mat3> es(c.cov, Eigen::EigenvaluesOnly);
        const double reach = std::sqrt(kChi2Dof3Q95 * std::max(0.0, es.eigenvalues().maxCoeff()));
        return (c.mean - vehicle).norm() + reach <= fov_radius ? p_detect : 0.0;
    }
};

struct FilterParams {
    Vec3 bs_position = Vec3(0.0, 0.0, 40.0);
    Mat5 noise_phd = Mat5::Identity();  // measurement covariance used for births and map correction
    DetectionModel detection;
    double birth_weight = 1.5e-5;
    PruneParams prune;
    double threshold_va = 0.7;
    double threshold_sp = 0.55;
    bool births_enabled = true;
};

struct Particle {
    VehicleState state;
    double log_weight = 0.0;
    TypedMap map;
};

inline constexpr int kNotBirth = -1;

/// Predicted map of one source type: prior components followed by the births
/// of this scan. birth_of[j] is the index of the generating measurement, or
/// kNotBirth for components carried over from the previous step.
struct TaggedMixture {
    std::vector<GaussianComponent> components;
    std::vector<int> birth_of;

    std::size_t size() const { return components.size(); }
    std::size_t birth_count() const {
        std::size_t n = 0;
        for (int b : birth_of) n += (b != kNotBirth);
        return n;
    }
};

struct PredictedMap {
    TaggedMixture va;
    TaggedMixture sp;

    TaggedMixture& of(SourceType t) { return t == SourceType::VA ? va : sp; }
    const TaggedMixture& of(SourceType t) const { return t == SourceType::VA ? va : sp; }
};

// ---------------------------------------------------------------------------

/// Initial particle cloud: Gaussian around `mean` in x, y, heading and bias.
template <class Rng>
std::vector<Particle> draw_prior(const VehicleState& mean, double sigma_xy, double sigma_heading,
                                 double sigma_bias, std::size_t count, const Vec3& bs, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<Particle> out(count);
    const double lw = -std::log(static_cast<double>(count));
    for (auto& p : out) {
        p.state = mean;
        p.state.position.x() += sigma_xy * n01(rng);
        p.state.position.y() += sigma_xy * n01(rng);
        p.state.heading = wrap_angle(p.state.heading + sigma_heading * n01(rng));
        p.state.clock_bias += sigma_bias * n01(rng);
        p.log_weight = lw;
        p.map.bs_position = bs;
    }
    return out;
}

/// Samples every particle state through the motion model. Weights and maps
/// are left untouched; the birth part of the map prediction happens in
/// birth_append once the scan is known.
template <class Rng>
void predict(std::vector<Particle>& particles, double dt, const ProcessNoiseSpec& q, Rng& rng) {
    for (auto& p : particles) p.state = sample_transition(p.state, dt, q, rng);
}

/// Predicted map: previous posterior plus one measurement-driven birth per
/// (measurement, source type). SP births whose mean falls outside the field
/// of view are skipped, as are births whose inversion fails.
inline PredictedMap birth_append(const Particle& p, const std::vector<Measurement>& Z, const FilterParams& fp,
                                 std::size_t* failed_births = nullptr) {
    PredictedMap out;
    for (SourceType t : {SourceType::VA, SourceType::SP}) {
        auto& tm = out.of(t);
        tm.components = p.map.of(t).components;
        tm.birth_of.assign(tm.components.size(), kNotBirth);
    }
    if (!fp.births_enabled) return out;
    const Vec3& v = p.state.position;
    const double fov = fp.detection.fov_radius;
    for (std::size_t q = 0; q < Z.size(); ++q) {
        const Vec5& z = Z[q].values;
        for (SourceType t : {SourceType::VA, SourceType::SP}) {
            if (t == SourceType::SP) {
                // cheap pre-gate on the nominal back-projection before the full inversion
                const auto nominal = back_project(z, p.state, t, fp.bs_position);
                if (!nominal || (*nominal - v).norm() > fov + 10.0) continue;
            }
            auto birth = invert_measurement(z, p.state, t, fp.bs_position, fp.noise_phd);
            if (!birth) {
                if (failed_births) ++*failed_births;
                continue;
            }
            if (t == SourceType::SP && (birth->mean - v).norm() > fov) continue;
            Eigen::LLT<Mat3> llt(birth->cov);
            if (llt.info() != Eigen::Success) {
                birth->cov += 1e-6 * Mat3::Identity();
                llt.compute(birth->cov);
                if (llt.info() != Eigen::Success) {
                    if (failed_births) ++*failed_births;
                    continue;
                }
            }
            birth->weight = fp.birth_weight;
            auto& tm = out.of(t);
            tm.components.push_back(*birth);
            tm.birth_of.push_back(static_cast<int>(q));
        }
    }
    return out;
}

/// log of a sum of exponentials, computed as in the sorted scheme: the
/// largest term is factored out and the rest accumulated from large to small.
inline double sorted_log_sum(std::vector<double> log_terms) {
    std::erase_if(log_terms, [](double x) { return x == -std::numeric_limits<double>::infinity(); });
    if (log_terms.empty()) return -std::numeric_limits<double>::infinity();
    std::sort(log_terms.begin(), log_terms.end(), std::greater<>());
    double rest = 0.0;
    for (std::size_t l = 1; l < log_terms.size(); ++l) rest += std::exp(log_terms[l] - log_terms[0]);
    return log_terms[0] + std::log1p(rest);
}

/// log N(r; 0, S) given the Cholesky factor of S.
inline double log_gaussian(const Vec5& r, const Eigen::LLT<Mat5>& llt) {
    const Mat5& L = llt.matrixLLT();
    double log_det = 0.0;
    for (int i = 0; i < 5; ++i) log_det += 2.0 * std::log(L(i, i));
    const Vec5 y = llt.matrixL().solve(r);
    return -0.5 * (5.0 * std::log(2.0 * kPi) + log_det + y.squaredNorm());
}

namespace detail {

struct ComponentCache {
    bool valid = false;
    double p_detect = 0.0;
    UpdateComponents u;
    Eigen::LLT<Mat5> s_llt;
};

}  // namespace detail

/// Per-scan bookkeeping returned by update_maps.
struct MapUpdateTerms {
    /// log W(z) per measurement, W(z) = c(z) + sum over all types/components of mu.
    std::vector<double> log_denominator;
    /// Components that could not be linearised (geometry undefined at a
    /// cubature point); they keep only their missed-detection copy.
    std::size_t skipped_components = 0;
};

/// GM-PHD map correction for one particle, in place.
///
/// The BS entry is left unchanged. For VA and SP every predicted component
/// contributes a missed-detection copy (weight gamma * (1 - p_D); zero for
/// births, which are dropped) plus one detection copy per measurement. A
/// birth paired with its own measurement keeps its prior moments with
/// likelihood one; every other pairing is a cubature Kalman update. The
/// per-measurement normalizer is shared by all types and is returned so the
/// particle weight update can reuse it.
inline MapUpdateTerms update_maps(Particle& p, const PredictedMap& pred, const std::vector<Measurement>& Z,
                                  const FilterParams& fp) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    const Vec3& bs = fp.bs_position;
    const Vec3& v = p.state.position;
    MapUpdateTerms terms;

    std::array<std::vector<detail::ComponentCache>, 2> cache;
    const std::array<SourceType, 2> types = {SourceType::VA, SourceType::SP};
    for (std::size_t ti = 0; ti < 2; ++ti) {
        const auto& tm = pred.of(types[ti]);
        cache[ti].resize(tm.size());
        for (std::size_t j = 0; j < tm.size(); ++j) {
            auto& cc = cache[ti][j];
            const bool birth = tm.birth_of[j] != kNotBirth;
            cc.p_detect = birth ? 1.0 : fp.detection.p_detect_component(types[ti], tm.components[j], v);
            if (cc.p_detect <= 0.0) continue;
            try {
                cc.u = update_components(tm.components[j], p.state, types[ti], bs, fp.noise_phd);
                cc.s_llt.compute(cc.u.s_zz);
                cc.valid = cc.s_llt.info() == Eigen::Success;
            } catch (const GeometryError&) {
                cc.valid = false;
            } catch (const NumericError&) {
                cc.valid = false;
            }
            if (!cc.valid) ++terms.skipped_components;
        }
    }

    const double pd_bs = fp.detection.p_detect_at(SourceType::BS, bs, v);
    std::optional<Vec5> z_bs;
    try {
        z_bs = measure(SourceType::BS, bs, p.state, bs).values;
    } catch (const GeometryError&) {
    }
    Eigen::LLT<Mat5> noise_llt(fp.noise_phd);
    const double log_clutter = std::log(fp.detection.clutter_intensity());

    // log mu for every (type, measurement, component)
    std::array<std::vector<std::vector<double>>, 2> log_mu;
    for (std::size_t ti = 0; ti < 2; ++ti) log_mu[ti].assign(Z.size(), {});
    terms.log_denominator.resize(Z.size());
    for (std::size_t q = 0; q < Z.size(); ++q) {
        const Vec5& z = Z[q].values;
        std::vector<double> all = {log_clutter};
        if (z_bs && pd_bs > 0.0) {
            all.push_back(std::log(pd_bs) + log_gaussian(measurement_residual(z, *z_bs), noise_llt));
        }
        for (std::size_t ti = 0; ti < 2; ++ti) {
            const auto& tm = pred.of(types[ti]);
            auto& lm = log_mu[ti][q];
            lm.assign(tm.size(), neg_inf);
            for (std::size_t j = 0; j < tm.size(); ++j) {
                const double gamma = tm.components[j].weight;
                if (!(gamma > 0.0)) continue;
                if (tm.birth_of[j] == static_cast<int>(q)) {
                    lm[j] = std::log(gamma);
                } else if (cache[ti][j].valid) {
                    const auto& cc = cache[ti][j];
                    lm[j] = std::log(cc.p_detect) + std::log(gamma) +
                            log_gaussian(measurement_residual(z, cc.u.z_pred), cc.s_llt);
                }
                all.push_back(lm[j]);
            }
        }
        terms.log_denominator[q] = sorted_log_sum(std::move(all));
    }

    for (std::size_t ti = 0; ti < 2; ++ti) {
        const auto& tm = pred.of(types[ti]);
        GaussianMixture post;
        post.components.reserve(tm.size() * (Z.size() + 1));
        for (std::size_t j = 0; j < tm.size(); ++j) {
            if (tm.birth_of[j] != kNotBirth) continue;
            const double w = (1.0 - cache[ti][j].p_detect) * tm.components[j].weight;
            if (w > 0.0) post.components.push_back({w, tm.components[j].mean, tm.components[j].cov});
        }
        for (std::size_t q = 0; q < Z.size(); ++q) {
            const Vec5& z = Z[q].values;
            for (std::size_t j = 0; j < tm.size(); ++j) {
                const double lm = log_mu[ti][q][j];
                if (lm == neg_inf) continue;
                const double w = std::exp(lm - terms.log_denominator[q]);
                if (!(w > 0.0)) continue;
                const auto& prior = tm.components[j];
                if (tm.birth_of[j] == static_cast<int>(q)) {
                    post.components.push_back({w, prior.mean, prior.cov});
                } else {
                    const auto& cc = cache[ti][j];
                    post.components.push_back(
                        {w, prior.mean + cc.u.gain * measurement_residual(z, cc.u.z_pred), cc.u.p_post});
                }
            }
        }
        p.map.of(types[ti]) = std::move(post);
    }
    return terms;
}

/// l += sum_z log W(z). Terms are summed in sorted order so the result does
/// not depend on the order of the scan.
inline void update_log_weight(Particle& p, std::vector<double> log_denominators) {
    std::sort(log_denominators.begin(), log_denominators.end());
    double s = 0.0;
    for (double x : log_denominators) s += x;
    p.log_weight += s;
}

/// Normalizes log-weights in place (log-sum-exp). Throws FilterDivergence if
/// no particle has a finite weight.
inline void normalize_log_weights(std::vector<Particle>& particles) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& p : particles) mx = std::max(mx, p.log_weight);
    if (!std::isfinite(mx)) throw FilterDivergence("all particle weights vanished");
    double s = 0.0;
    for (const auto& p : particles) s += std::exp(p.log_weight - mx);
    const double lse = mx + std::log(s);
    for (auto& p : particles) p.log_weight -= lse;
}

/// Linear-domain normalized weights.
inline std::vector<double> normalized_weights(const std::vector<Particle>& particles) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& p : particles) mx = std::max(mx, p.log_weight);
    if (!std::isfinite(mx)) throw FilterDivergence("all particle weights vanished");
    std::vector<double> w(particles.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] = std::exp(particles[i].log_weight - mx));
    for (auto& x : w) x /= s;
    return w;
}

/// Systematic resampling indices: one uniform offset, `count` evenly spaced
/// pointers into the cumulative weights.
inline std::vector<std::size_t> systematic_indices(const std::vector<double>& weights, std::size_t count,
                                                   double offset) {
    std::vector<std::size_t> idx(count);
    double cum = weights.empty() ? 0.0 : weights[0];
    std::size_t i = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double u = (offset + static_cast<double>(k)) / static_cast<double>(count);
        while (u >= cum && i + 1 < weights.size()) cum += weights[++i];
        idx[k] = i;
    }
    return idx;
}

/// Normalize and resample (systematic). The output has `count` particles
/// (defaults to the input size) with uniform weights 1/count.
template <class Rng>
std::vector<Particle> normalize_and_resample(const std::vector<Particle>& particles, Rng& rng,
                                             std::size_t count = 0) {
    if (count == 0) count = particles.size();
    const auto w = normalized_weights(particles);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const auto idx = systematic_indices(w, count, u01(rng));
    std::vector<Particle> out;
    out.reserve(count);
    const double lw = -std::log(static_cast<double>(count));
    for (std::size_t k : idx) {
        out.push_back(particles[k]);
        out.back().log_weight = lw;
    }
    return out;
}

/// Weighted sample mean of the particle states; heading is averaged on the
/// circle.
inline VehicleState estimate_state(const std::vector<Particle>& particles) {
    const auto w = normalized_weights(particles);
    VehicleState est;
    est.position = Vec3::Zero();
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < particles.size(); ++i) {
        const auto& s = particles[i].state;
        est.position += w[i] * s.position;
        sx += w[i] * std::cos(s.heading);
        sy += w[i] * std::sin(s.heading);
        est.speed += w[i] * s.speed;
        est.turn_rate += w[i] * s.turn_rate;
        est.clock_bias += w[i] * s.clock_bias;
    }
    est.heading = wrap_angle(std::atan2(sy, sx));
    return est;
}

/// Detected sources of a VA/SP map pair, thresholded per type.
inline std::vector<Source> extract_sources(const GaussianMixture& va, const GaussianMixture& sp, double t_va,
                                           double t_sp) {
    std::vector<Source> out;
    for (const auto& x : extract_map(va, t_va)) out.push_back({SourceType::VA, x});
    for (const auto& x : extract_map(sp, t_sp)) out.push_back({SourceType::SP, x});
    return out;
}

/// One complete measurement step for a single particle (everything that can
/// run independently per particle between resampling barriers).
inline MapUpdateTerms particle_measurement_step(Particle& p, const std::vector<Measurement>& Z,
                                                const FilterParams& fp) {
    const PredictedMap pred = birth_append(p, Z, fp);
    MapUpdateTerms terms = update_maps(p, pred, Z, fp);
    update_log_weight(p, terms.log_denominator);
    p.map.va = prune_merge(p.map.va, fp.prune);
    p.map.sp = prune_merge(p.map.sp, fp.prune);
    return terms;
}

}  // namespace coopslam
