#pragma once

// Two-vehicle simulation: ground truth, measurement synthesis and the
// Monte-Carlo driver that runs the filters and the base-station fusion.

#include "coopslam/fusion.hpp"
#include "coopslam/metrics.hpp"
#include "coopslam/phd_slam.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace coopslam {

/// Sync steps of one vehicle: first_step, first_step + period, ... up to K.
struct SyncSchedule {
    int period = 4;
    std::vector<int> first_step = {10, 12};  // per vehicle

    bool is_sync(std::size_t vehicle, int k) const {
        if (vehicle >= first_step.size() || period <= 0) return false;
        const int f = first_step[vehicle];
        return k >= f && (k - f) % period == 0;
    }
};

struct Scenario {
    Vec3 bs = Vec3(0.0, 0.0, 40.0);
    std::vector<Vec3> vas = {Vec3(200.0, 0.0, 40.0), Vec3(-200.0, 0.0, 40.0), Vec3(0.0, 200.0, 40.0),
                             Vec3(0.0, -200.0, 40.0)};
    // SP ground positions; heights are drawn per run from U(sp_z_min, sp_z_max)
    std::vector<Eigen::Vector2d> sp_xy = {Eigen::Vector2d(65.0, 65.0), Eigen::Vector2d(-65.0, 65.0),
                                          Eigen::Vector2d(65.0, -65.0), Eigen::Vector2d(-65.0, -65.0)};
    double sp_z_min = 0.0;
    double sp_z_max = 40.0;

    std::vector<VehicleState> initial = {
        {Vec3(70.7285, 0.0, 0.0), kPi / 2.0, 22.22, kPi / 10.0, 300.0},
        {Vec3(-70.7285, 0.0, 0.0), kPi / 2.0, -22.22, kPi / 10.0, 300.0},
    };
    double prior_sigma_xy = 0.3;       // m
    double prior_sigma_heading = 0.3;  // rad
    double prior_sigma_bias = 0.3;     // m

    double dt = 0.5;  // s
    int steps = 40;   // K
    ProcessNoiseSpec process_noise{0.2, 0.2, 0.001, 0.2};

    // measurement noise used for synthesis; the filter uses phd_noise_scale times this
    Mat5 noise = (Vec5() << 1e-2, 1e-4, 1e-4, 1e-4, 1e-4).finished().asDiagonal();
    double phd_noise_scale = 9.0;

    DetectionModel detection;
    SyncSchedule sync;

    double birth_weight = 1.5e-5;
    PruneParams prune;
    double threshold_va = 0.7;
    double threshold_sp = 0.55;
    double gamma_d = 0.7;
    double gamma_up = 11.34;

    std::size_t vehicle_count() const { return initial.size(); }
    Mat5 noise_phd() const { return phd_noise_scale * noise; }
};

enum class RunMode { prediction_only, los_only, local_phd, fusion_ul, fusion_uldl };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::prediction_only: return "prediction-only";
        case RunMode::los_only: return "los-only";
        case RunMode::local_phd: return "local-phd";
        case RunMode::fusion_ul: return "fusion-ul";
        case RunMode::fusion_uldl: return "fusion-uldl";
    }
    return "?";
}

inline RunMode run_mode_from_string(const std::string& s) {
    for (RunMode m : {RunMode::prediction_only, RunMode::los_only, RunMode::local_phd, RunMode::fusion_ul,
                      RunMode::fusion_uldl}) {
        if (s == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown mode: " + s);
}

inline bool uses_maps(RunMode m) { return m != RunMode::prediction_only && m != RunMode::los_only; }
inline bool uses_uplink(RunMode m) { return m == RunMode::fusion_ul || m == RunMode::fusion_uldl; }

struct RunConfig {
    Scenario scenario;
    RunMode mode = RunMode::fusion_uldl;
    std::size_t particles = 2000;  // I
    int monte_carlo_runs = 20;     // N_mc
    std::uint64_t seed = 1;
};

// ---------------------------------------------------------------------------
// Random streams

/// What a random stream is used for. Each (run, vehicle, purpose) triple gets
/// its own generator so that changing one model does not shift the draws of
/// another.
enum class StreamPurpose : std::uint32_t {
    scenario = 1,  // per-run SP heights (vehicle index 0)
    motion = 2,
    detection = 3,
    noise = 4,
    clutter = 5,
    shuffle = 6,
    prior = 7,
    predict = 8,
    resample = 9,
};

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, int run, int vehicle, StreamPurpose purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(vehicle),
                      static_cast<std::uint32_t>(purpose)};
    return Rng(seq);
}

// ---------------------------------------------------------------------------
// Ground truth and measurements

/// SP positions with heights drawn from U(sp_z_min, sp_z_max).
template <class R>
std::vector<Vec3> draw_scatterers(const Scenario& sc, R& rng) {
    std::uniform_real_distribution<double> uz(sc.sp_z_min, sc.sp_z_max);
    std::vector<Vec3> out;
    for (const auto& xy : sc.sp_xy) out.emplace_back(xy.x(), xy.y(), uz(rng));
    return out;
}

/// States at k = 0..K of one vehicle.
template <class R>
std::vector<VehicleState> propagate_truth(const VehicleState& initial, double dt, int steps,
                                          const ProcessNoiseSpec& q, R& rng) {
    std::vector<VehicleState> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(initial);
    for (int k = 1; k <= steps; ++k) out.push_back(sample_transition(out.back(), dt, q, rng));
    return out;
}

/// A synthesized return with its true origin. Origin tags are for the
/// harness only; the filter sees `z`.
struct TaggedMeasurement {
    Measurement z;
    bool clutter = false;
    SourceType origin = SourceType::BS;
    int source_index = -1;  // index into the scenario list of that type, -1 for clutter
};

struct SynthesisStreams {
    Rng detection;
    Rng noise;
    Rng clutter;
    Rng shuffle;
};

inline SynthesisStreams make_synthesis_streams(std::uint64_t seed, int run, int vehicle) {
    return {make_stream(seed, run, vehicle, StreamPurpose::detection),
            make_stream(seed, run, vehicle, StreamPurpose::noise),
            make_stream(seed, run, vehicle, StreamPurpose::clutter),
            make_stream(seed, run, vehicle, StreamPurpose::shuffle)};
}

/// One scan: BS, every VA and every SP within the field of view is detected
/// with probability p_D and perturbed with N(0, noise); clutter is Poisson
/// with uniform returns over the measurement box. The result is shuffled.
///
/// Every source consumes one detection draw and five noise draws whether or
/// not it is visible, so the streams stay aligned across geometries.
inline std::vector<TaggedMeasurement> synthesize_measurements(const VehicleState& truth, const Vec3& bs,
                                                              const std::vector<Vec3>& vas,
                                                              const std::vector<Vec3>& sps, const Mat5& noise,
                                                              const DetectionModel& det, SynthesisStreams& st) {
    Eigen::LLT<Mat5> llt(noise);
    if (llt.info() != Eigen::Success) throw NumericError("synthesize_measurements: noise covariance not PD");
    const Mat5 L = llt.matrixL();
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);

    std::vector<TaggedMeasurement> out;
    auto emit = [&](SourceType kind, const Vec3& loc, int index) {
        const bool hit = u01(st.detection) < det.p_detect;
        Vec5 e;
        for (int i = 0; i < 5; ++i) e[i] = n01(st.noise);
        const bool visible = kind != SourceType::SP || (loc - truth.position).norm() <= det.fov_radius;
        if (!hit || !visible) return;
        TaggedMeasurement m;
        m.z.values = wrap_measurement(measure(kind, loc, truth, bs).values + L * e);
        m.origin = kind;
        m.source_index = index;
        out.push_back(m);
    };
    emit(SourceType::BS, bs, 0);
    for (std::size_t i = 0; i < vas.size(); ++i) emit(SourceType::VA, vas[i], static_cast<int>(i));
    for (std::size_t i = 0; i < sps.size(); ++i) emit(SourceType::SP, sps[i], static_cast<int>(i));

    if (det.clutter_rate > 0.0) {
        std::poisson_distribution<int> count(det.clutter_rate);
        const int n = count(st.clutter);
        std::uniform_real_distribution<double> ur(0.0, det.max_range);
        std::uniform_real_distribution<double> uel(-kPi / 2.0, kPi / 2.0);
        std::uniform_real_distribution<double> uaz(-kPi, kPi);
        for (int c = 0; c < n; ++c) {
            TaggedMeasurement m;
            m.clutter = true;
            m.z.values[kRange] = ur(st.clutter);
            m.z.values[kDoaEl] = uel(st.clutter);
            m.z.values[kDoaAz] = uaz(st.clutter);
            m.z.values[kDodEl] = uel(st.clutter);
            m.z.values[kDodAz] = uaz(st.clutter);
            out.push_back(m);
        }
    }
    std::shuffle(out.begin(), out.end(), st.shuffle);
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo driver

enum class Holder { bs = 0, vehicle1 = 1, vehicle2 = 2 };

struct GospaSample {
    int k = 0;
    int holder = 0;  // 0 = BS, n = vehicle n
    SourceType type = SourceType::VA;
    double value = 0.0;
};

struct SyncRecord {
    UplinkMessage uplink;
    BSMap bs_before;
    BSMap bs_after;
    bool downlink = false;
};

struct RunResult {
    int run = 0;
    std::vector<Vec3> vas;
    std::vector<Vec3> sps;
    // [vehicle][k], k = 0..K; index 0 is the initial state / prior estimate
    std::vector<std::vector<VehicleState>> truth;
    std::vector<std::vector<VehicleState>> estimate;
    // [vehicle][k-1], scans for k = 1..K
    std::vector<std::vector<std::vector<TaggedMeasurement>>> measurements;
    std::vector<SyncRecord> syncs;
    std::vector<GospaSample> gospa;
    std::size_t failed_births = 0;
    std::size_t particle_failures = 0;
    bool diverged = false;
    std::string divergence_reason;
};

struct VehicleFilter {
    std::vector<Particle> particles;
    Rng predict_rng;
    Rng resample_rng;
    std::vector<Vec3> fov_poses;  // estimated positions since the last sync
};

inline FilterParams filter_params(const Scenario& sc, RunMode mode) {
    FilterParams fp;
    fp.bs_position = sc.bs;
    fp.noise_phd = sc.noise_phd();
    fp.detection = sc.detection;
    fp.birth_weight = sc.birth_weight;
    fp.prune = sc.prune;
    fp.threshold_va = sc.threshold_va;
    fp.threshold_sp = sc.threshold_sp;
    fp.births_enabled = uses_maps(mode);
    return fp;
}

/// Runs every particle through birth, update and weighting; particles whose
/// update fails numerically are given zero weight.
inline void measurement_update(std::vector<Particle>& particles, const std::vector<Measurement>& Z,
                               const FilterParams& fp, RunResult& rr) {
    for (auto& p : particles) {
        try {
            const PredictedMap pred = birth_append(p, Z, fp, &rr.failed_births);
            const MapUpdateTerms terms = update_maps(p, pred, Z, fp);
            update_log_weight(p, terms.log_denominator);
            p.map.va = prune_merge(p.map.va, fp.prune);
            p.map.sp = prune_merge(p.map.sp, fp.prune);
        } catch (const NumericError&) {
            p.log_weight = -std::numeric_limits<double>::infinity();
            ++rr.particle_failures;
        }
    }
}

/// One Monte-Carlo run. Truth and measurements depend only on (seed, run);
/// the mode only changes what the filters do with them.
inline RunResult run_single(const RunConfig& cfg, int run) {
    const Scenario& sc = cfg.scenario;
    const std::size_t nv = sc.vehicle_count();
    const FilterParams fp = filter_params(sc, cfg.mode);
    const GospaParams gp;

    RunResult rr;
    rr.run = run;
    rr.vas = sc.vas;
    {
        Rng rs = make_stream(cfg.seed, run, 0, StreamPurpose::scenario);
        rr.sps = draw_scatterers(sc, rs);
    }
    rr.truth.resize(nv);
    rr.estimate.resize(nv);
    rr.measurements.resize(nv);
    std::vector<SynthesisStreams> synth;
    std::vector<VehicleFilter> filters(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        const int vid = static_cast<int>(v) + 1;
        Rng motion = make_stream(cfg.seed, run, vid, StreamPurpose::motion);
        rr.truth[v] = propagate_truth(sc.initial[v], sc.dt, sc.steps, sc.process_noise, motion);
        synth.push_back(make_synthesis_streams(cfg.seed, run, vid));
        Rng prior = make_stream(cfg.seed, run, vid, StreamPurpose::prior);
        filters[v].particles = draw_prior(sc.initial[v], sc.prior_sigma_xy, sc.prior_sigma_heading,
                                          sc.prior_sigma_bias, cfg.particles, sc.bs, prior);
        filters[v].predict_rng = make_stream(cfg.seed, run, vid, StreamPurpose::predict);
        filters[v].resample_rng = make_stream(cfg.seed, run, vid, StreamPurpose::resample);
        rr.estimate[v].push_back(estimate_state(filters[v].particles));
    }

    FusionParams fusion{sc.gamma_up, sc.prune};
    FusionCenter center(fusion);

    auto record_gospa = [&](int k, int holder, const MapPair& m) {
        rr.gospa.push_back({k, holder, SourceType::VA, gospa(rr.vas, extract_map(m.va, sc.threshold_va), gp)});
        rr.gospa.push_back({k, holder, SourceType::SP, gospa(rr.sps, extract_map(m.sp, sc.threshold_sp), gp)});
    };

    try {
        for (int k = 1; k <= sc.steps; ++k) {
            for (std::size_t v = 0; v < nv; ++v) {
                const int vid = static_cast<int>(v) + 1;
                auto& f = filters[v];
                const VehicleState& truth = rr.truth[v][static_cast<std::size_t>(k)];
                rr.measurements[v].push_back(
                    synthesize_measurements(truth, sc.bs, rr.vas, rr.sps, sc.noise, sc.detection, synth[v]));

                predict(f.particles, sc.dt, sc.process_noise, f.predict_rng);
                if (cfg.mode == RunMode::prediction_only) {
                    rr.estimate[v].push_back(estimate_state(f.particles));
                    continue;
                }

                std::vector<Measurement> Z;
                for (const auto& tm : rr.measurements[v].back()) {
                    if (cfg.mode == RunMode::los_only && (tm.clutter || tm.origin != SourceType::BS)) continue;
                    Z.push_back(tm.z);
                }
                measurement_update(f.particles, Z, fp, rr);
                normalize_log_weights(f.particles);
                const VehicleState est = estimate_state(f.particles);
                rr.estimate[v].push_back(est);
                f.fov_poses.push_back(est.position);

                MapPair local;
                if (uses_maps(cfg.mode)) {
                    local = average_map(f.particles, sc.prune);
                    record_gospa(k, vid, local);
                }
                f.particles = normalize_and_resample(f.particles, f.resample_rng);

                if (uses_uplink(cfg.mode) && sc.sync.is_sync(v, k)) {
                    SyncRecord rec;
                    rec.uplink = {vid, k, local, accumulate_fov(f.fov_poses, sc.detection, sc.gamma_d)};
                    rec.bs_before = center.map();
                    const DownlinkMessage dl = center.receive(rec.uplink);
                    rec.bs_after = center.map();
                    if (cfg.mode == RunMode::fusion_uldl) {
                        downlink_apply(f.particles, dl.map);
                        rec.downlink = true;
                    }
                    f.fov_poses.clear();
                    rr.syncs.push_back(std::move(rec));
                }
            }
            if (uses_uplink(cfg.mode)) record_gospa(k, static_cast<int>(Holder::bs), center.map());
        }
    } catch (const FilterDivergence& e) {
        rr.diverged = true;
        rr.divergence_reason = e.what();
    }
    return rr;
}

struct MonteCarloResult {
    RunConfig config;
    std::vector<RunResult> runs;

    std::vector<const RunResult*> converged() const {
        std::vector<const RunResult*> out;
        for (const auto& r : runs) {
            if (!r.diverged) out.push_back(&r);
        }
        return out;
    }
};

/// N_mc independent runs. `progress` (optional) is called after each run.
inline MonteCarloResult run_monte_carlo(const RunConfig& cfg,
                                        const std::function<void(const RunResult&)>& progress = {}) {
    MonteCarloResult out;
    out.config = cfg;
    for (int r = 0; r < cfg.monte_carlo_runs; ++r) {
        out.runs.push_back(run_single(cfg, r));
        if (progress) progress(out.runs.back());
    }
    return out;
}

/// Steady-state error statistics of one vehicle over the converged runs.
inline StateErrorStats vehicle_errors(const MonteCarloResult& mc, std::size_t vehicle, std::size_t k_start = 20) {
    std::vector<std::vector<VehicleState>> est, truth;
    for (const RunResult* r : mc.converged()) {
        est.push_back(r->estimate[vehicle]);
        truth.push_back(r->truth[vehicle]);
    }
    if (est.empty()) return {};
    return mae_rmse(est, truth, k_start);
}

/// Mean GOSPA per step over the converged runs for one holder and type;
/// element k-1 is step k, NaN where no run has a sample.
inline std::vector<double> mean_gospa_series(const MonteCarloResult& mc, int holder, SourceType type) {
    const auto steps = static_cast<std::size_t>(mc.config.scenario.steps);
    std::vector<double> sum(steps, 0.0);
    std::vector<int> n(steps, 0);
    for (const RunResult* r : mc.converged()) {
        for (const auto& g : r->gospa) {
            if (g.holder != holder || g.type != type || g.k < 1) continue;
            sum[static_cast<std::size_t>(g.k - 1)] += g.value;
            ++n[static_cast<std::size_t>(g.k - 1)];
        }
    }
    std::vector<double> out(steps, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < steps; ++i) {
        if (n[i] > 0) out[i] = sum[i] / n[i];
    }
    return out;
}

}  // namespace coopslam
