#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace coopslam;

namespace {

FilterParams scenario_params(bool births = true) {
    FilterParams fp = filter_params(Scenario{}, RunMode::local_phd);
    fp.births_enabled = births;
    return fp;
}

Particle particle_at(const VehicleState& s, const std::vector<GaussianComponent>& va = {},
                     const std::vector<GaussianComponent>& sp = {}) {
    Particle p;
    p.state = s;
    p.map.bs_position = Scenario{}.bs;
    p.map.va.components = va;
    p.map.sp.components = sp;
    return p;
}

Vec5 noiseless(SourceType kind, const Vec3& x, const VehicleState& s) {
    return measure(kind, x, s, Scenario{}.bs).values;
}

std::vector<Measurement> scan(const std::vector<Vec5>& zs) {
    std::vector<Measurement> out;
    for (const auto& z : zs) out.push_back({z});
    return out;
}

const VehicleState& start() {
    static const VehicleState s = Scenario{}.initial[0];
    return s;
}

}  // namespace

TEST(PhdSlam, EmptyScanKeepsMissedCopiesOnly) {
    const GaussianComponent va{0.8, Vec3(200, 0, 40), Mat3::Identity()};
    const GaussianComponent sp{0.6, Vec3(65, 20, 10), Mat3::Identity()};
    Particle p = particle_at(start(), {va}, {sp});
    const FilterParams fp = scenario_params();
    const auto pred = birth_append(p, {}, fp);
    EXPECT_EQ(pred.va.birth_count() + pred.sp.birth_count(), 0u);
    const auto terms = update_maps(p, pred, {}, fp);
    EXPECT_TRUE(terms.log_denominator.empty());
    ASSERT_EQ(p.map.va.size(), 1u);
    EXPECT_NEAR(p.map.va.components[0].weight, 0.8 * 0.1, 1e-15);
    ASSERT_EQ(p.map.sp.size(), 1u);
    EXPECT_NEAR(p.map.sp.components[0].weight, 0.6 * 0.1, 1e-15);
    const double before = p.log_weight;
    update_log_weight(p, terms.log_denominator);
    EXPECT_EQ(p.log_weight, before);
}

TEST(PhdSlam, SpOutsideFieldOfViewIsNotDetected) {
    const GaussianComponent sp{0.6, Vec3(-65, -65, 10), Mat3::Identity()};
    Particle p = particle_at(start(), {}, {sp});
    const FilterParams fp = scenario_params(false);
    const Vec5 z = noiseless(SourceType::BS, fp.bs_position, start());
    update_maps(p, birth_append(p, scan({z}), fp), scan({z}), fp);
    ASSERT_EQ(p.map.sp.size(), 1u);
    EXPECT_EQ(p.map.sp.components[0].weight, 0.6);
}

TEST(PhdSlam, ZeroDetectionIsIdentity) {
    const GaussianComponent va{0.8, Vec3(200, 0, 40), Mat3::Identity()};
    Particle p = particle_at(start(), {va});
    FilterParams fp = scenario_params(false);
    fp.detection.p_detect = 0.0;
    const Vec5 z = noiseless(SourceType::VA, va.mean, start());
    const auto terms = update_maps(p, birth_append(p, scan({z}), fp), scan({z}), fp);
    ASSERT_EQ(p.map.va.size(), 1u);
    EXPECT_EQ(p.map.va.components[0].weight, 0.8);
    EXPECT_EQ(p.map.va.components[0].mean, va.mean);
    ASSERT_EQ(terms.log_denominator.size(), 1u);
    EXPECT_NEAR(terms.log_denominator[0], std::log(fp.detection.clutter_intensity()), 1e-12);
}

TEST(PhdSlam, DetectionMassMatchesDenominator) {
    const Scenario sc;
    const FilterParams fp = scenario_params();
    const VehicleState& s = start();
    const std::vector<GaussianComponent> va = {{0.9, sc.vas[0] + Vec3(0.5, -0.3, 0), 2.0 * Mat3::Identity()},
                                               {0.4, sc.vas[2], Mat3::Identity()}};
    const std::vector<GaussianComponent> sp = {{0.7, Vec3(65, 30, 15), 3.0 * Mat3::Identity()}};
    Particle p = particle_at(s, va, sp);
    const std::vector<Vec5> zs = {noiseless(SourceType::BS, sc.bs, s), noiseless(SourceType::VA, sc.vas[0], s),
                                  noiseless(SourceType::SP, Vec3(64, 31, 14), s)};
    const auto Z = scan(zs);
    const auto pred = birth_append(p, Z, fp);
    const auto terms = update_maps(p, pred, Z, fp);

    // independent W(z): clutter + BS + every predicted component
    const double c = fp.detection.clutter_intensity();
    Eigen::LLT<Mat5> nl(fp.noise_phd);
    const Vec5 zbs = noiseless(SourceType::BS, sc.bs, s);
    double missed = 0.0, detected_expected = 0.0;
    for (std::size_t q = 0; q < Z.size(); ++q) {
        double w = c + fp.detection.p_detect * std::exp(log_gaussian(measurement_residual(zs[q], zbs), nl));
        for (SourceType t : {SourceType::VA, SourceType::SP}) {
            const auto& tm = pred.of(t);
            for (std::size_t j = 0; j < tm.size(); ++j) {
                const auto& comp = tm.components[j];
                if (tm.birth_of[j] == static_cast<int>(q)) {
                    w += comp.weight;
                    continue;
                }
                const double pd = tm.birth_of[j] != kNotBirth ? 1.0 : fp.detection.p_detect_at(t, comp.mean, s.position);
                if (pd == 0.0) continue;
                const auto u = update_components(comp, s, t, fp.bs_position, fp.noise_phd);
                w += pd * comp.weight * std::exp(log_gaussian(measurement_residual(zs[q], u.z_pred), Eigen::LLT<Mat5>(u.s_zz)));
            }
        }
        EXPECT_NEAR(terms.log_denominator[q], std::log(w), 1e-9);
        const double bs_term = fp.detection.p_detect * std::exp(log_gaussian(measurement_residual(zs[q], zbs), nl));
        detected_expected += (w - c - bs_term) / w;
    }
    for (SourceType t : {SourceType::VA, SourceType::SP}) {
        const auto& tm = pred.of(t);
        for (std::size_t j = 0; j < tm.size(); ++j) {
            if (tm.birth_of[j] != kNotBirth) continue;
            missed += (1.0 - fp.detection.p_detect_at(t, tm.components[j].mean, s.position)) * tm.components[j].weight;
        }
    }
    EXPECT_NEAR(mass(p.map.va) + mass(p.map.sp), missed + detected_expected, 1e-9);
}

TEST(PhdSlam, ScanOrderDoesNotMatter) {
    const Scenario sc;
    const FilterParams fp = scenario_params();
    const VehicleState& s = start();
    std::vector<Vec5> zs = {noiseless(SourceType::BS, sc.bs, s), noiseless(SourceType::VA, sc.vas[0], s),
                            noiseless(SourceType::VA, sc.vas[1], s), noiseless(SourceType::SP, Vec3(65, 30, 15), s)};
    Particle a = particle_at(s, {{0.9, sc.vas[0], Mat3::Identity()}});
    Particle b = a;
    particle_measurement_step(a, scan(zs), fp);
    std::reverse(zs.begin(), zs.end());
    std::swap(zs[1], zs[2]);
    particle_measurement_step(b, scan(zs), fp);
    EXPECT_NEAR(a.log_weight, b.log_weight, 1e-12);
    EXPECT_NEAR(mass(a.map.va), mass(b.map.va), 1e-12);
    EXPECT_NEAR(mass(a.map.sp), mass(b.map.sp), 1e-12);
    EXPECT_EQ(a.map.va.size(), b.map.va.size());
}

TEST(PhdSlam, BirthsPerScanBounded) {
    const Scenario sc;
    const FilterParams fp = scenario_params();
    const VehicleState& s = start();
    std::vector<Vec5> zs = {noiseless(SourceType::BS, sc.bs, s)};
    for (const auto& va : sc.vas) zs.push_back(noiseless(SourceType::VA, va, s));
    const Particle p = particle_at(s);
    std::size_t failed = 0;
    const auto pred = birth_append(p, scan(zs), fp, &failed);
    EXPECT_LE(pred.va.birth_count(), zs.size());
    EXPECT_LE(pred.sp.birth_count(), zs.size());
    EXPECT_LE(pred.va.birth_count() + pred.sp.birth_count() + failed, 2 * zs.size());
    for (const auto& c : pred.va.components) EXPECT_EQ(c.weight, fp.birth_weight);
    for (const auto& c : pred.sp.components) EXPECT_LE((c.mean - s.position).norm(), fp.detection.fov_radius);
}

TEST(PhdSlam, BirthsDisabledAddNothing) {
    const Scenario sc;
    const Particle p = particle_at(start());
    const auto pred = birth_append(p, scan({noiseless(SourceType::VA, sc.vas[0], start())}), scenario_params(false));
    EXPECT_EQ(pred.va.size() + pred.sp.size(), 0u);
}

TEST(PhdSlam, VaBirthLandsOnSource) {
    const Scenario sc;
    const Particle p = particle_at(start());
    const auto pred = birth_append(p, scan({noiseless(SourceType::VA, sc.vas[0], start())}), scenario_params());
    ASSERT_EQ(pred.va.birth_count(), 1u);
    EXPECT_LT((pred.va.components[0].mean - sc.vas[0]).norm(), 0.5);
    EXPECT_EQ(pred.va.birth_of[0], 0);
}

TEST(PhdSlam, SystematicCountsMatchOracle) {
    const std::vector<double> w = {0.5, 0.3, 0.2};
    const auto idx = systematic_indices(w, 10, 0.5);
    std::vector<int> counts(3, 0);
    for (auto i : idx) ++counts[i];
    EXPECT_EQ(counts, (std::vector<int>{5, 3, 2}));
    EXPECT_EQ(counts, oracle::systematic_counts(w, 10, 0.5));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> ww(7);
        double s = 0;
        for (auto& x : ww) s += (x = u(rng));
        for (auto& x : ww) x /= s;
        const double off = u(rng);
        std::vector<int> c(7, 0);
        for (auto i : systematic_indices(ww, 50, off)) ++c[i];
        EXPECT_EQ(c, oracle::systematic_counts(ww, 50, off));
        for (std::size_t i = 0; i < 7; ++i) {
            EXPECT_GE(c[i], static_cast<int>(std::floor(50 * ww[i])) - 1);
            EXPECT_LE(c[i], static_cast<int>(std::ceil(50 * ww[i])) + 1);
        }
    }
}

TEST(PhdSlam, ResampleAllWeightOnOneParticle) {
    std::vector<Particle> ps(5);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ps[i].state.position.x() = static_cast<double>(i);
        ps[i].log_weight = -std::numeric_limits<double>::infinity();
    }
    ps[3].log_weight = 0.0;
    std::mt19937_64 rng(1);
    const auto out = normalize_and_resample(ps, rng);
    ASSERT_EQ(out.size(), 5u);
    for (const auto& p : out) {
        EXPECT_EQ(p.state.position.x(), 3.0);
        EXPECT_NEAR(p.log_weight, -std::log(5.0), 1e-15);
    }
}

TEST(PhdSlam, AllWeightsVanishedThrows) {
    std::vector<Particle> ps(3);
    for (auto& p : ps) p.log_weight = -std::numeric_limits<double>::infinity();
    EXPECT_THROW(normalize_log_weights(ps), FilterDivergence);
    EXPECT_THROW(estimate_state(ps), FilterDivergence);
}

TEST(PhdSlam, NormalizeIsShiftInvariant) {
    std::vector<Particle> ps(4);
    const double lw[] = {-1000.0, -1001.0, -1002.5, -1e9};
    for (std::size_t i = 0; i < 4; ++i) ps[i].log_weight = lw[i];
    normalize_log_weights(ps);
    double s = 0;
    for (const auto& p : ps) s += std::exp(p.log_weight);
    EXPECT_NEAR(s, 1.0, 1e-13);
    EXPECT_NEAR(ps[0].log_weight - ps[1].log_weight, 1.0, 1e-12);
}

TEST(PhdSlam, CircularHeadingMean) {
    std::vector<Particle> ps(2);
    ps[0].state.heading = kPi - 0.1;
    ps[1].state.heading = -kPi + 0.1;
    EXPECT_NEAR(std::abs(estimate_state(ps).heading), kPi, 1e-12);
    ps[0].state.heading = 0.3;
    ps[1].state.heading = 0.5;
    ps[0].log_weight = std::log(0.25);
    ps[1].log_weight = std::log(0.75);
    ps[0].state.clock_bias = 100;
    ps[1].state.clock_bias = 200;
    const auto e = estimate_state(ps);
    EXPECT_NEAR(e.clock_bias, 175.0, 1e-12);
    EXPECT_NEAR(e.heading, std::atan2(0.25 * std::sin(0.3) + 0.75 * std::sin(0.5), 0.25 * std::cos(0.3) + 0.75 * std::cos(0.5)),
                1e-12);
}

TEST(PhdSlam, ExtractSourcesThresholds) {
    GaussianMixture va, sp;
    va.components = {{0.75, Vec3(200, 0, 40), Mat3::Identity()}, {0.6, Vec3(0, 200, 40), Mat3::Identity()}};
    sp.components = {{0.6, Vec3(65, 65, 10), Mat3::Identity()}, {0.5, Vec3(-65, 65, 10), Mat3::Identity()}};
    const auto src = extract_sources(va, sp, 0.7, 0.55);
    ASSERT_EQ(src.size(), 2u);
    EXPECT_EQ(src[0].kind, SourceType::VA);
    EXPECT_EQ(src[1].kind, SourceType::SP);
}

TEST(PhdSlam, MatchingParticleGainsWeight) {
    const Scenario sc;
    const FilterParams fp = scenario_params();
    const VehicleState& truth = start();
    std::vector<Vec5> zs = {noiseless(SourceType::BS, sc.bs, truth)};
    for (const auto& va : sc.vas) zs.push_back(noiseless(SourceType::VA, va, truth));
    Particle good = particle_at(truth);
    VehicleState off = truth;
    off.position.x() += 1.0;
    off.clock_bias += 1.0;
    Particle bad = particle_at(off);
    particle_measurement_step(good, scan(zs), fp);
    particle_measurement_step(bad, scan(zs), fp);
    EXPECT_GT(good.log_weight, bad.log_weight);
}

TEST(PhdSlam, PriorDrawMoments) {
    const Scenario sc;
    std::mt19937_64 rng(5);
    const auto ps = draw_prior(sc.initial[0], 0.3, 0.3, 0.3, 20000, sc.bs, rng);
    double mx = 0, vx = 0;
    for (const auto& p : ps) mx += p.state.position.x();
    mx /= ps.size();
    for (const auto& p : ps) vx += std::pow(p.state.position.x() - mx, 2);
    vx /= ps.size();
    EXPECT_NEAR(mx, sc.initial[0].position.x(), 0.01);
    EXPECT_NEAR(vx, 0.09, 0.005);
    for (const auto& p : ps) EXPECT_EQ(p.map.bs_position, sc.bs);
}

TEST(PhdSlam, SortedLogSum) {
    EXPECT_EQ(sorted_log_sum({}), -std::numeric_limits<double>::infinity());
    EXPECT_NEAR(sorted_log_sum({std::log(1.0), std::log(2.0), std::log(3.0)}), std::log(6.0), 1e-15);
    EXPECT_NEAR(sorted_log_sum({-1000.0, -1000.0}), -1000.0 + std::log(2.0), 1e-12);
}
