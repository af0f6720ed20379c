#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace coopslam;

namespace {

GaussianMixture mixture(std::initializer_list<GaussianComponent> c) {
    GaussianMixture gm;
    gm.components = c;
    return gm;
}

AccumulatedFoV fov_at(std::vector<Vec3> centers) {
    AccumulatedFoV f;
    f.centers = std::move(centers);
    f.radius = 50.0;
    return f;
}

double weight_near(const GaussianMixture& gm, const Vec3& x) {
    double w = 0;
    for (const auto& c : gm.components) {
        if ((c.mean - x).norm() < 1e-6) w += c.weight;
    }
    return w;
}

}  // namespace

TEST(Fusion, EmptyBsMapIsOverwritten) {
    MapPair vehicle;
    vehicle.va = mixture({{0.8, Vec3(200, 0, 40), Mat3::Identity()}});
    vehicle.sp = mixture({{0.3, Vec3(65, 65, 10), Mat3::Identity()}, {0.5, Vec3(-65, 65, 10), Mat3::Identity()}});
    const auto out = fuse(BSMap{}, vehicle, fov_at({}), FusionParams{});
    EXPECT_TRUE(identical(out, vehicle));
}

TEST(Fusion, MatchedPairIsAveraged) {
    BSMap bs;
    bs.va = mixture({{0.8, Vec3(200, 0, 40), Mat3::Identity()}});
    MapPair vehicle;
    vehicle.va = mixture({{0.6, Vec3(200.5, 0, 40), Mat3::Identity()}});
    const auto unpruned = fuse_unpruned(bs.va, vehicle.va, fov_at({}), SourceType::VA, 11.34);
    ASSERT_EQ(unpruned.size(), 2u);
    EXPECT_DOUBLE_EQ(unpruned.components[0].weight, 0.3);
    EXPECT_DOUBLE_EQ(unpruned.components[1].weight, 0.4);
    const auto out = fuse(bs, vehicle, fov_at({}), FusionParams{});
    ASSERT_EQ(out.va.size(), 1u);
    EXPECT_NEAR(out.va.components[0].weight, 0.7, 1e-15);
    EXPECT_NEAR(out.va.components[0].mean.x(), (0.4 * 200 + 0.3 * 200.5) / 0.7, 1e-12);
}

TEST(Fusion, UnmatchedBsComponentOutsideFovKeepsWeight) {
    BSMap bs;
    bs.sp = mixture({{0.9, Vec3(-65, -65, 10), Mat3::Identity()}});
    MapPair vehicle;
    vehicle.sp = mixture({{0.7, Vec3(65, 65, 10), Mat3::Identity()}});
    const auto out = fuse(bs, vehicle, fov_at({Vec3(60, 40, 0)}), FusionParams{});
    EXPECT_DOUBLE_EQ(weight_near(out.sp, Vec3(-65, -65, 10)), 0.9);
    EXPECT_DOUBLE_EQ(weight_near(out.sp, Vec3(65, 65, 10)), 0.7);
}

TEST(Fusion, UnmatchedBsComponentInsideFovIsHalved) {
    BSMap bs;
    bs.sp = mixture({{0.9, Vec3(-65, -65, 10), Mat3::Identity()}});
    MapPair vehicle;
    vehicle.sp = mixture({{0.7, Vec3(65, 65, 10), Mat3::Identity()}});
    const auto out = fuse(bs, vehicle, fov_at({Vec3(-50, -40, 0)}), FusionParams{});
    EXPECT_DOUBLE_EQ(weight_near(out.sp, Vec3(-65, -65, 10)), 0.45);
    EXPECT_DOUBLE_EQ(weight_near(out.sp, Vec3(65, 65, 10)), 0.7);
}

TEST(Fusion, VasAreAlwaysInsideFov) {
    BSMap bs;
    bs.va = mixture({{0.9, Vec3(0, -200, 40), Mat3::Identity()}});
    MapPair vehicle;
    vehicle.va = mixture({{0.7, Vec3(200, 0, 40), Mat3::Identity()}});
    const auto out = fuse(bs, vehicle, fov_at({}), FusionParams{});
    EXPECT_DOUBLE_EQ(weight_near(out.va, Vec3(0, -200, 40)), 0.45);
}

TEST(Fusion, ProximityUsesEitherCovariance) {
    // the wide BS covariance gates the pair even though the narrow vehicle one does not
    const auto v = mixture({{0.5, Vec3(0, 0, 0), 0.01 * Mat3::Identity()}});
    const auto b = mixture({{0.5, Vec3(2, 0, 0), 4.0 * Mat3::Identity()}});
    const auto c = proximity(v, b, 11.34);
    EXPECT_EQ(c.a(0, 0), 0);
    EXPECT_EQ(c.p(0, 0), 1);
    const auto fw = fusion_weights(v, b, c, fov_at({}), SourceType::VA);
    EXPECT_EQ(fw.beta_a[0], 0.5);
    EXPECT_EQ(fw.beta_p[0], 0.5);
}

TEST(Fusion, FovExamples) {
    const DetectionModel det;
    const auto f = accumulate_fov({Vec3(0, 0, 0), Vec3(100, 0, 0)}, det, 0.7);
    EXPECT_TRUE(f.contains(SourceType::SP, Vec3(30, 30, 10)));
    EXPECT_TRUE(f.contains(SourceType::SP, Vec3(140, 0, 0)));
    EXPECT_FALSE(f.contains(SourceType::SP, Vec3(50, 40, 0)));
    EXPECT_TRUE(f.contains(SourceType::VA, Vec3(1e4, 0, 0)));
    // a threshold above p_D leaves no region
    EXPECT_FALSE(accumulate_fov({Vec3::Zero()}, det, 0.95).contains(SourceType::SP, Vec3::Zero()));
    EXPECT_FALSE(accumulate_fov({}, det, 0.7).contains(SourceType::SP, Vec3::Zero()));
}

TEST(Fusion, IdenticalMapsKeepTheirMass) {
    MapPair m;
    m.va = mixture({{0.8, Vec3(200, 0, 40), Mat3::Identity()}, {0.9, Vec3(0, 200, 40), Mat3::Identity()}});
    m.sp = mixture({{0.6, Vec3(65, 65, 10), Mat3::Identity()}});
    const auto out = fuse(m, m, fov_at({Vec3(60, 60, 0)}), FusionParams{});
    EXPECT_NEAR(mass(out.va), mass(m.va), 1e-12);
    EXPECT_NEAR(mass(out.sp), mass(m.sp), 1e-12);
    EXPECT_EQ(out.va.size(), 2u);
}

TEST(Fusion, AverageMapMass) {
    std::vector<Particle> ps(3);
    const double w[] = {0.2, 0.3, 0.5};
    for (int i = 0; i < 3; ++i) {
        ps[i].log_weight = std::log(w[i]);
        ps[i].map.va.components = {{0.9, Vec3(200 + i * 100.0, 0, 40), Mat3::Identity()}};
    }
    const auto avg = average_map(ps, PruneParams{});
    EXPECT_NEAR(mass(avg.va), 0.9, 1e-12);
    EXPECT_EQ(avg.va.size(), 3u);
    EXPECT_NEAR(weight_near(avg.va, Vec3(400, 0, 40)), 0.45, 1e-12);
}

TEST(Fusion, DownlinkOverwritesEveryParticle) {
    std::vector<Particle> ps(4);
    for (auto& p : ps) p.map.va.components = {{0.1, Vec3::Random(), Mat3::Identity()}};
    BSMap bs;
    bs.va = mixture({{0.8, Vec3(200, 0, 40), Mat3::Identity()}});
    bs.sp = mixture({{0.6, Vec3(65, 65, 10), Mat3::Identity()}});
    downlink_apply(ps, bs);
    for (const auto& p : ps) {
        EXPECT_TRUE(identical(p.map.va, bs.va));
        EXPECT_TRUE(identical(p.map.sp, bs.sp));
    }
}

TEST(Fusion, CenterProcessesMessagesSequentially) {
    FusionCenter center(FusionParams{});
    UplinkMessage a{1, 10, {}, fov_at({Vec3(60, 40, 0)})};
    a.map.sp = mixture({{0.8, Vec3(65, 65, 10), Mat3::Identity()}});
    UplinkMessage b{2, 12, {}, fov_at({Vec3(-60, -40, 0)})};
    b.map.sp = mixture({{0.6, Vec3(-65, -65, 10), Mat3::Identity()}});

    center.receive(a);
    const auto dl = center.receive(b);
    const auto expected = fuse(fuse(BSMap{}, a.map, a.fov, FusionParams{}), b.map, b.fov, FusionParams{});
    EXPECT_TRUE(identical(dl.map, expected));
    EXPECT_TRUE(identical(center.map(), expected));
    // the SP seen only by vehicle 1 is outside vehicle 2's FoV and keeps its weight
    EXPECT_DOUBLE_EQ(weight_near(center.map().sp, Vec3(65, 65, 10)), 0.8);
}
