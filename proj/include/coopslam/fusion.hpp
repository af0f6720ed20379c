#pragma once

// Map fusion at the base station.
//
// A vehicle uplinks its particle-averaged map and the field of view it has
// covered since its previous sync. The BS splits both maps into a common
// part (components matched by Mahalanobis proximity), a vehicle-only part and
// a BS-only part, averages them with per-part weights and prunes the result.
// On downlink the vehicle overwrites every particle's map with the BS map.

#include "coopslam/gaussian_mixture.hpp"
#include "coopslam/phd_slam.hpp"

#include <vector>

namespace coopslam {

/// VA and SP mixtures without the BS entry (uplink payload, BS state, downlink payload).
struct MapPair {
    GaussianMixture va;
    GaussianMixture sp;

    GaussianMixture& of(SourceType t) {
        if (t == SourceType::VA) return va;
        if (t == SourceType::SP) return sp;
        throw std::invalid_argument("MapPair has no BS entry");
    }
    const GaussianMixture& of(SourceType t) const { return const_cast<MapPair*>(this)->of(t); }
};

using BSMap = MapPair;

/// Particle-weighted average of the conditional maps, pruned and merged.
/// Every component of every particle enters with its weight scaled by the
/// normalized particle weight.
inline MapPair average_map(const std::vector<Particle>& particles, const PruneParams& prune) {
    const auto w = normalized_weights(particles);
    MapPair out;
    for (SourceType t : {SourceType::VA, SourceType::SP}) {
        GaussianMixture all;
        for (std::size_t i = 0; i < particles.size(); ++i) {
            for (const auto& c : particles[i].map.of(t).components) {
                all.components.push_back({w[i] * c.weight, c.mean, c.cov});
            }
        }
        out.of(t) = prune_merge(all, prune);
    }
    return out;
}

/// Region covered by a vehicle since its last sync: for SPs, the union of
/// balls of radius `radius` around the estimated positions; VAs are always
/// covered.
struct AccumulatedFoV {
    std::vector<Vec3> centers;
    double radius = 0.0;

    bool contains(SourceType kind, const Vec3& x) const {
        if (kind != SourceType::SP) return true;
        for (const auto& c : centers) {
            if ((x - c).norm() <= radius) return true;
        }
        return false;
    }
};

/// Accumulates {x : p_D(x, s_hat, m) >= gamma_d} over the given poses. With
/// the binary-disc SP detection model this is a union of balls when
/// gamma_d <= p_D and empty otherwise.
inline AccumulatedFoV accumulate_fov(const std::vector<Vec3>& poses, const DetectionModel& model, double gamma_d) {
    AccumulatedFoV f;
    f.radius = model.fov_radius;
    if (gamma_d <= model.p_detect) f.centers = poses;
    return f;
}

/// Binary proximity matrices between vehicle components (rows) and BS
/// components (columns). a(ja, jp) tests with the vehicle covariance,
/// p(ja, jp) with the BS covariance.
struct ProximityMatrices {
    Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> a;
    Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> p;
};

inline ProximityMatrices proximity(const GaussianMixture& vehicle, const GaussianMixture& bs, double gamma_up) {
    const auto na = static_cast<Eigen::Index>(vehicle.size());
    const auto np = static_cast<Eigen::Index>(bs.size());
    ProximityMatrices m;
    m.a.setZero(na, np);
    m.p.setZero(na, np);
    for (Eigen::Index ja = 0; ja < na; ++ja) {
        const auto& ca = vehicle.components[static_cast<std::size_t>(ja)];
        for (Eigen::Index jp = 0; jp < np; ++jp) {
            const auto& cp = bs.components[static_cast<std::size_t>(jp)];
            if (mahalanobis_sq(cp.mean, cp.cov, ca.mean) < gamma_up) m.p(ja, jp) = 1;
            if (mahalanobis_sq(ca.mean, ca.cov, cp.mean) < gamma_up) m.a(ja, jp) = 1;
        }
    }
    return m;
}

/// Fusion weights for one source type: beta_a per vehicle component and
/// beta_p per BS component.
struct FusionWeights {
    std::vector<double> beta_a;
    std::vector<double> beta_p;
};

/// Matched pairs get 1/2 on both sides. An unmatched BS component keeps
/// weight 1 outside the vehicle's accumulated FoV and is halved inside it. An
/// unmatched vehicle component enters with weight 1.
inline FusionWeights fusion_weights(const GaussianMixture& vehicle, const GaussianMixture& bs,
                                    const ProximityMatrices& c, const AccumulatedFoV& fov, SourceType kind) {
    FusionWeights fw;
    fw.beta_a.assign(vehicle.size(), 1.0);
    fw.beta_p.assign(bs.size(), 1.0);
    std::vector<bool> matched_a(vehicle.size(), false);
    std::vector<bool> matched_p(bs.size(), false);
    for (Eigen::Index ja = 0; ja < c.a.rows(); ++ja) {
        for (Eigen::Index jp = 0; jp < c.a.cols(); ++jp) {
            if (std::max(c.a(ja, jp), c.p(ja, jp)) == 1) {
                matched_a[static_cast<std::size_t>(ja)] = true;
                matched_p[static_cast<std::size_t>(jp)] = true;
            }
        }
    }
    for (std::size_t ja = 0; ja < vehicle.size(); ++ja) fw.beta_a[ja] = matched_a[ja] ? 0.5 : 1.0;
    for (std::size_t jp = 0; jp < bs.size(); ++jp) {
        if (matched_p[jp]) {
            fw.beta_p[jp] = 0.5;
        } else {
            fw.beta_p[jp] = fov.contains(kind, bs.components[jp].mean) ? 0.5 : 1.0;
        }
    }
    return fw;
}

struct FusionParams {
    double gamma_up = 11.34;  // squared Mahalanobis gate (chi-square 3 dof, 99%)
    PruneParams prune;
};

/// Weighted concatenation of both mixtures before pruning.
inline GaussianMixture fuse_unpruned(const GaussianMixture& bs, const GaussianMixture& vehicle,
                                     const AccumulatedFoV& fov, SourceType kind, double gamma_up) {
    const auto c = proximity(vehicle, bs, gamma_up);
    const auto fw = fusion_weights(vehicle, bs, c, fov, kind);
    GaussianMixture out;
    out.components.reserve(vehicle.size() + bs.size());
    for (std::size_t ja = 0; ja < vehicle.size(); ++ja) {
        auto comp = vehicle.components[ja];
        comp.weight *= fw.beta_a[ja];
        out.components.push_back(comp);
    }
    for (std::size_t jp = 0; jp < bs.size(); ++jp) {
        auto comp = bs.components[jp];
        comp.weight *= fw.beta_p[jp];
        out.components.push_back(comp);
    }
    return out;
}

/// Fuses one vehicle map into the BS map. An empty BS map (per type) is
/// simply replaced by the vehicle map.
inline BSMap fuse(const BSMap& bs, const MapPair& vehicle, const AccumulatedFoV& fov, const FusionParams& p) {
    BSMap out;
    for (SourceType t : {SourceType::VA, SourceType::SP}) {
        if (bs.of(t).empty()) {
            out.of(t) = vehicle.of(t);
            continue;
        }
        out.of(t) = prune_merge(fuse_unpruned(bs.of(t), vehicle.of(t), fov, t, p.gamma_up), p.prune);
    }
    return out;
}

/// Replaces every particle's VA and SP intensities with the BS map.
inline void downlink_apply(std::vector<Particle>& particles, const BSMap& bs) {
    for (auto& p : particles) {
        p.map.va = bs.va;
        p.map.sp = bs.sp;
    }
}

/// Vehicle -> BS message.
struct UplinkMessage {
    int vehicle = 0;
    int step = 0;
    MapPair map;
    AccumulatedFoV fov;
};

/// BS -> vehicle message.
struct DownlinkMessage {
    MapPair map;
};

/// Base-station side state. Messages are processed strictly one at a time,
/// each against the latest BS map.
class FusionCenter {
public:
    explicit FusionCenter(FusionParams params) : params_(params) {}

    DownlinkMessage receive(const UplinkMessage& msg) {
        map_ = fuse(map_, msg.map, msg.fov, params_);
        return {map_};
    }

    const BSMap& map() const { return map_; }
    void reset(BSMap m) { map_ = std::move(m); }

private:
    FusionParams params_;
    BSMap map_;
};

}  // namespace coopslam
