#pragma once

#include "coopslam/types.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace coopslam {

/// One weighted Gaussian term of a map intensity over 3D source location.
struct GaussianComponent {
    double weight = 0.0;
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Identity();
};

/// Gaussian-mixture PHD. The weights are expected counts and need not sum to one.
struct GaussianMixture {
    std::vector<GaussianComponent> components;

    std::size_t size() const { return components.size(); }
    bool empty() const { return components.empty(); }
};

inline double mass(const GaussianMixture& gm) {
    double m = 0.0;
    for (const auto& c : gm.components) m += c.weight;
    return m;
}

/// Map intensity per source type. The BS entry is a fixed unit-weight Dirac at
/// the known BS position and is never modified by the filter.
struct TypedMap {
    Vec3 bs_position = Vec3::Zero();
    GaussianMixture va;
    GaussianMixture sp;

    GaussianMixture& of(SourceType t) {
        if (t == SourceType::VA) return va;
        if (t == SourceType::SP) return sp;
        throw std::invalid_argument("the BS entry of a typed map is not a mixture");
    }
    const GaussianMixture& of(SourceType t) const { return const_cast<TypedMap*>(this)->of(t); }

    GaussianComponent bs_component() const { return {1.0, bs_position, Mat3::Zero()}; }
};

/// (a - b)^T cov_a^{-1} (a - b).
inline double mahalanobis_sq(const Vec3& mean_a, const Mat3& cov_a, const Vec3& point_b) {
    Eigen::LLT<Mat3> llt(cov_a);
    if (llt.info() != Eigen::Success) throw NumericError("mahalanobis_sq: covariance not positive definite");
    const Vec3 d = mean_a - point_b;
    return d.dot(llt.solve(d));
}

inline Mat3 symmetrize(const Mat3& p) { return 0.5 * (p + p.transpose()); }

struct PruneParams {
    double truncation = 1e-4;  // T
    double merge_sq = 49.0;    // U, squared Mahalanobis distance
    std::size_t max_components = 50;  // J_max
};

/// Truncate, merge and cap a mixture (Vo & Ma, GM-PHD, Table II).
///
/// Components with weight below T are dropped. The remaining ones are
/// clustered greedily around the current highest-weight component: every
/// candidate whose squared Mahalanobis distance to it, measured with the
/// candidate's own covariance, is at most U is moment-matched into one term.
/// Finally only the J_max heaviest merged terms are kept.
inline GaussianMixture prune_merge(const GaussianMixture& gm, const PruneParams& p) {
    struct Candidate {
        const GaussianComponent* c;
        Eigen::LLT<Mat3> llt;
        bool valid;
    };
    std::vector<Candidate> cand;
    cand.reserve(gm.size());
    for (const auto& c : gm.components) {
        if (!(c.weight >= p.truncation)) continue;
        Eigen::LLT<Mat3> llt(c.cov);
        cand.push_back({&c, llt, llt.info() == Eigen::Success});
    }
    // stable descending order keeps ties deterministic
    std::vector<std::size_t> order(cand.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cand[a].c->weight > cand[b].c->weight; });

    std::vector<bool> used(cand.size(), false);
    GaussianMixture out;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t head = order[oi];
        if (used[head]) continue;
        const Vec3 centre = cand[head].c->mean;
        double w = 0.0;
        Vec3 m = Vec3::Zero();
        std::vector<std::size_t> members;
        for (std::size_t oj = oi; oj < order.size(); ++oj) {
            const std::size_t k = order[oj];
            if (used[k]) continue;
            bool close = (k == head);
            if (!close && cand[k].valid) {
                const Vec3 d = cand[k].c->mean - centre;
                close = d.dot(cand[k].llt.solve(d)) <= p.merge_sq;
            }
            if (!close) continue;
            used[k] = true;
            members.push_back(k);
            w += cand[k].c->weight;
            m += cand[k].c->weight * cand[k].c->mean;
        }
        m /= w;
        Mat3 P = Mat3::Zero();
        for (std::size_t k : members) {
            const Vec3 d = m - cand[k].c->mean;
            P += cand[k].c->weight * (cand[k].c->cov + d * d.transpose());
        }
        P /= w;
        out.components.push_back({w, m, symmetrize(P)});
    }
    if (out.components.size() > p.max_components) {
        std::stable_sort(out.components.begin(), out.components.end(),
                         [](const GaussianComponent& a, const GaussianComponent& b) { return a.weight > b.weight; });
        out.components.resize(p.max_components);
    }
    return out;
}

/// Means of the components whose weight reaches `threshold` (inclusive).
inline std::vector<Vec3> extract_map(const GaussianMixture& gm, double threshold) {
    std::vector<Vec3> out;
    for (const auto& c : gm.components) {
        if (c.weight >= threshold) out.push_back(c.mean);
    }
    return out;
}

}  // namespace coopslam
