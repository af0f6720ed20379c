#pragma once

// Export of run results and lossless (de)serialization of maps and sync
// messages. Doubles are written in their shortest round-trip form, so a
// mixture read back from JSON is bit-identical to the one written.

#include "coopslam/config.hpp"
#include "coopslam/sim.hpp"

#include "json.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <variant>

namespace coopslam {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Maps and messages

inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json to_json(const GaussianComponent& c) {
    Json cov = Json::array();
    for (int r = 0; r < 3; ++r) cov.push_back(Json::array({c.cov(r, 0), c.cov(r, 1), c.cov(r, 2)}));
    return {{"weight", c.weight}, {"mean", to_json(c.mean)}, {"cov", cov}};
}

inline GaussianComponent component_from_json(const Json& j) {
    GaussianComponent c;
    c.weight = j.at("weight").get<double>();
    c.mean = vec3_from_json(j.at("mean"));
    const Json& cov = j.at("cov");
    if (!cov.is_array() || cov.size() != 3) throw std::invalid_argument("cov must be 3x3");
    for (int r = 0; r < 3; ++r) c.cov.row(r) = vec3_from_json(cov[static_cast<std::size_t>(r)]).transpose();
    return c;
}

inline Json to_json(const GaussianMixture& gm) {
    Json a = Json::array();
    for (const auto& c : gm.components) a.push_back(to_json(c));
    return a;
}

inline GaussianMixture mixture_from_json(const Json& j) {
    GaussianMixture gm;
    for (const auto& c : j) gm.components.push_back(component_from_json(c));
    return gm;
}

inline Json to_json(const MapPair& m) { return {{"va", to_json(m.va)}, {"sp", to_json(m.sp)}}; }

inline MapPair map_pair_from_json(const Json& j) { return {mixture_from_json(j.at("va")), mixture_from_json(j.at("sp"))}; }

inline Json to_json(const AccumulatedFoV& f) {
    Json c = Json::array();
    for (const auto& x : f.centers) c.push_back(to_json(x));
    return {{"radius_m", f.radius}, {"centers_m", c}};
}

inline AccumulatedFoV fov_from_json(const Json& j) {
    AccumulatedFoV f;
    f.radius = j.at("radius_m").get<double>();
    for (const auto& c : j.at("centers_m")) f.centers.push_back(vec3_from_json(c));
    return f;
}

inline Json to_json(const UplinkMessage& m) {
    return {{"vehicle", m.vehicle}, {"step", m.step}, {"map", to_json(m.map)}, {"fov", to_json(m.fov)}};
}

inline UplinkMessage uplink_from_json(const Json& j) {
    return {j.at("vehicle").get<int>(), j.at("step").get<int>(), map_pair_from_json(j.at("map")),
            fov_from_json(j.at("fov"))};
}

inline Json to_json(const FusionParams& p) {
    return {{"gamma_up", p.gamma_up},
            {"prune_truncation", p.prune.truncation},
            {"prune_merge_sq", p.prune.merge_sq},
            {"prune_max_components", p.prune.max_components}};
}

inline FusionParams fusion_params_from_json(const Json& j) {
    FusionParams p;
    p.gamma_up = j.at("gamma_up").get<double>();
    p.prune.truncation = j.at("prune_truncation").get<double>();
    p.prune.merge_sq = j.at("prune_merge_sq").get<double>();
    p.prune.max_components = j.at("prune_max_components").get<std::size_t>();
    return p;
}

/// A sync event as exported: the uplink, the BS map before and after fusion
/// and the fusion parameters needed to replay it.
struct SyncFile {
    int run = 0;
    SyncRecord record;
    FusionParams params;
};

inline Json to_json(const SyncFile& s) {
    return {{"schema_version", kSchemaVersion},
            {"run", s.run},
            {"fusion", to_json(s.params)},
            {"uplink", to_json(s.record.uplink)},
            {"bs_before", to_json(s.record.bs_before)},
            {"bs_after", to_json(s.record.bs_after)},
            {"downlink", s.record.downlink}};
}

inline SyncFile sync_file_from_json(const Json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
        throw std::invalid_argument("unsupported schema_version " + std::to_string(version));
    }
    SyncFile s;
    s.run = j.at("run").get<int>();
    s.params = fusion_params_from_json(j.at("fusion"));
    s.record.uplink = uplink_from_json(j.at("uplink"));
    s.record.bs_before = map_pair_from_json(j.at("bs_before"));
    s.record.bs_after = map_pair_from_json(j.at("bs_after"));
    s.record.downlink = j.at("downlink").get<bool>();
    return s;
}

inline SyncFile load_sync_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return sync_file_from_json(Json::parse(in));
}

/// Bitwise equality of two mixtures.
inline bool identical(const GaussianMixture& a, const GaussianMixture& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.components[i];
        const auto& y = b.components[i];
        if (x.weight != y.weight || x.mean != y.mean || x.cov != y.cov) return false;
    }
    return true;
}

inline bool identical(const MapPair& a, const MapPair& b) { return identical(a.va, b.va) && identical(a.sp, b.sp); }

// ---------------------------------------------------------------------------
// Tables

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

inline std::string cell_text(const Cell& c) {
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&c)) {
        if (std::isnan(*d)) return "nan";
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, *d);
        return std::string(buf, r.ptr);
    }
    return std::get<std::string>(c);
}

inline void write_csv(const Table& t, std::ostream& out) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_text(row[i]);
        out << '\n';
    }
}

inline Json table_json(const Table& t) {
    Json rows = Json::array();
    for (const auto& row : t.rows) {
        Json o = Json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, double>) {
                        if (std::isnan(v)) o[t.columns[i]] = nullptr;
                        else o[t.columns[i]] = v;
                    } else {
                        o[t.columns[i]] = v;
                    }
                },
                row[i]);
        }
        rows.push_back(std::move(o));
    }
    return {{"schema_version", kSchemaVersion}, {"columns", t.columns}, {"rows", rows}};
}

enum class TableFormat { csv, json };

/// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.json`.
inline void write_table(const Table& t, const std::filesystem::path& dir, const std::string& stem, TableFormat f) {
    const auto path = dir / (stem + (f == TableFormat::csv ? ".csv" : ".json"));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (f == TableFormat::csv) {
        write_csv(t, out);
    } else {
        out << table_json(t).dump(1) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Result tables

inline Table states_table(const MonteCarloResult& mc) {
    Table t;
    t.columns = {"run",          "k",          "vehicle",      "true_x_m",      "true_y_m",        "true_z_m",
                 "true_heading_rad", "true_bias_m", "est_x_m",   "est_y_m",       "est_z_m",         "est_heading_rad",
                 "est_bias_m",   "err_location_m", "err_bias_m", "err_heading_rad"};
    for (const auto& r : mc.runs) {
        for (std::size_t v = 0; v < r.truth.size(); ++v) {
            for (std::size_t k = 1; k < r.estimate[v].size(); ++k) {
                const auto& s = r.truth[v][k];
                const auto& e = r.estimate[v][k];
                const auto err = state_error(e, s);
                t.rows.push_back({std::int64_t{r.run}, static_cast<std::int64_t>(k), static_cast<std::int64_t>(v + 1),
                                  s.position.x(), s.position.y(), s.position.z(), s.heading, s.clock_bias,
                                  e.position.x(), e.position.y(), e.position.z(), e.heading, e.clock_bias,
                                  err.location, err.bias, err.heading});
            }
        }
    }
    return t;
}

inline Table metrics_summary_table(const MonteCarloResult& mc, std::size_t k_start = 20) {
    Table t;
    t.columns = {"mode", "vehicle", "quantity", "mae", "rmse", "samples", "runs"};
    const auto runs = static_cast<std::int64_t>(mc.converged().size());
    for (std::size_t v = 0; v < mc.config.scenario.vehicle_count(); ++v) {
        const auto s = vehicle_errors(mc, v, k_start);
        const std::string mode = to_string(mc.config.mode);
        auto row = [&](const char* q, const ErrorStats& e) {
            t.rows.push_back({mode, static_cast<std::int64_t>(v + 1), std::string(q), e.mae, e.rmse,
                              static_cast<std::int64_t>(e.count), runs});
        };
        row("location_m", s.location);
        row("bias_m", s.bias);
        row("heading_rad", s.heading);
    }
    return t;
}

inline std::string holder_name(int holder) { return holder == 0 ? "bs" : "vehicle" + std::to_string(holder); }

inline Table gospa_table(const MonteCarloResult& mc) {
    Table t;
    t.columns = {"run", "k", "holder", "type", "gospa"};
    for (const auto& r : mc.runs) {
        for (const auto& g : r.gospa) {
            t.rows.push_back({std::int64_t{r.run}, std::int64_t{g.k}, holder_name(g.holder),
                              std::string(to_string(g.type)), g.value});
        }
    }
    return t;
}

/// Mean and standard deviation of GOSPA per (k, holder, type) over converged runs.
inline Table gospa_mean_table(const MonteCarloResult& mc) {
    Table t;
    t.columns = {"k", "holder", "type", "mean", "std", "runs"};
    struct Acc {
        double s = 0.0, s2 = 0.0;
        std::int64_t n = 0;
    };
    std::map<std::tuple<int, int, int>, Acc> acc;
    for (const RunResult* r : mc.converged()) {
        for (const auto& g : r->gospa) {
            auto& a = acc[{g.k, g.holder, static_cast<int>(g.type)}];
            a.s += g.value;
            a.s2 += g.value * g.value;
            ++a.n;
        }
    }
    for (const auto& [key, a] : acc) {
        const auto [k, holder, type] = key;
        const double mean = a.s / static_cast<double>(a.n);
        const double var = a.n > 1 ? std::max(0.0, (a.s2 - a.s * mean) / static_cast<double>(a.n - 1)) : 0.0;
        t.rows.push_back({std::int64_t{k}, holder_name(holder), std::string(to_string(static_cast<SourceType>(type))),
                          mean, std::sqrt(var), a.n});
    }
    return t;
}

inline Table gospa_plot_table(const MonteCarloResult& mc, SourceType type) {
    Table t;
    t.columns = {"k", "bs", "vehicle1", "vehicle2"};
    const auto bs = mean_gospa_series(mc, 0, type);
    const auto v1 = mean_gospa_series(mc, 1, type);
    const auto v2 = mean_gospa_series(mc, 2, type);
    for (std::size_t i = 0; i < bs.size(); ++i) {
        t.rows.push_back({static_cast<std::int64_t>(i + 1), bs[i], v1[i], v2[i]});
    }
    return t;
}

/// Truth and mean estimated trajectory per vehicle plus the source positions
/// of the first converged run.
inline Table trajectories_plot_table(const MonteCarloResult& mc) {
    Table t;
    t.columns = {"kind", "id", "k", "x_m", "y_m", "z_m"};
    const auto ok = mc.converged();
    if (ok.empty()) return t;
    const RunResult& r0 = *ok.front();
    t.rows.push_back({std::string("bs"), std::int64_t{0}, std::int64_t{-1}, mc.config.scenario.bs.x(),
                      mc.config.scenario.bs.y(), mc.config.scenario.bs.z()});
    for (std::size_t i = 0; i < r0.vas.size(); ++i) {
        t.rows.push_back({std::string("va"), static_cast<std::int64_t>(i + 1), std::int64_t{-1}, r0.vas[i].x(),
                          r0.vas[i].y(), r0.vas[i].z()});
    }
    for (std::size_t i = 0; i < r0.sps.size(); ++i) {
        t.rows.push_back({std::string("sp"), static_cast<std::int64_t>(i + 1), std::int64_t{-1}, r0.sps[i].x(),
                          r0.sps[i].y(), r0.sps[i].z()});
    }
    for (std::size_t v = 0; v < r0.truth.size(); ++v) {
        for (std::size_t k = 0; k < r0.truth[v].size(); ++k) {
            const auto& s = r0.truth[v][k].position;
            t.rows.push_back({std::string("truth"), static_cast<std::int64_t>(v + 1), static_cast<std::int64_t>(k),
                              s.x(), s.y(), s.z()});
        }
        for (std::size_t k = 0; k < r0.estimate[v].size(); ++k) {
            const auto& s = r0.estimate[v][k].position;
            t.rows.push_back({std::string("estimate"), static_cast<std::int64_t>(v + 1), static_cast<std::int64_t>(k),
                              s.x(), s.y(), s.z()});
        }
    }
    return t;
}

inline Table runs_table(const MonteCarloResult& mc) {
    Table t;
    t.columns = {"run", "diverged", "reason", "failed_births", "particle_failures", "sp_z_m"};
    for (const auto& r : mc.runs) {
        std::string z;
        for (const auto& sp : r.sps) z += (z.empty() ? "" : ";") + cell_text(sp.z());
        t.rows.push_back({std::int64_t{r.run}, std::int64_t{r.diverged ? 1 : 0}, r.divergence_reason,
                          static_cast<std::int64_t>(r.failed_births), static_cast<std::int64_t>(r.particle_failures),
                          z});
    }
    return t;
}

inline Table measurements_table(const MonteCarloResult& mc) {
    Table t;
    t.columns = {"run",    "k",          "vehicle",   "origin",    "source", "range_m",
                 "doa_el_rad", "doa_az_rad", "dod_el_rad", "dod_az_rad"};
    for (const auto& r : mc.runs) {
        for (std::size_t v = 0; v < r.measurements.size(); ++v) {
            for (std::size_t k = 0; k < r.measurements[v].size(); ++k) {
                for (const auto& m : r.measurements[v][k]) {
                    const Vec5& z = m.z.values;
                    t.rows.push_back({std::int64_t{r.run}, static_cast<std::int64_t>(k + 1),
                                      static_cast<std::int64_t>(v + 1),
                                      std::string(m.clutter ? "clutter" : to_string(m.origin)),
                                      std::int64_t{m.source_index}, z[0], z[1], z[2], z[3], z[4]});
                }
            }
        }
    }
    return t;
}

/// Writes every export of a Monte-Carlo result below `dir`.
inline void export_results(const MonteCarloResult& mc, const std::filesystem::path& dir, TableFormat f) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "config_resolved.cfg", std::ios::binary);
        cfg << to_config_text(mc.config);
    }
    write_table(states_table(mc), dir, "states", f);
    write_table(metrics_summary_table(mc), dir, "metrics_summary", f);
    write_table(runs_table(mc), dir, "runs", f);
    write_table(measurements_table(mc), dir, "measurements", f);
    write_table(trajectories_plot_table(mc), dir, "plot_trajectories", f);
    if (uses_maps(mc.config.mode)) {
        write_table(gospa_table(mc), dir, "gospa", f);
        write_table(gospa_mean_table(mc), dir, "gospa_mean", f);
        write_table(gospa_plot_table(mc, SourceType::VA), dir, "plot_gospa_va", f);
        write_table(gospa_plot_table(mc, SourceType::SP), dir, "plot_gospa_sp", f);
    }
    const FusionParams fp{mc.config.scenario.gamma_up, mc.config.scenario.prune};
    bool any_sync = false;
    for (const auto& r : mc.runs) any_sync = any_sync || !r.syncs.empty();
    if (any_sync) {
        fs::create_directories(dir / "sync");
        for (const auto& r : mc.runs) {
            for (const auto& rec : r.syncs) {
                const auto name = "run" + std::to_string(r.run) + "_k" + std::to_string(rec.uplink.step) + "_vehicle" +
                                  std::to_string(rec.uplink.vehicle) + ".json";
                std::ofstream out(dir / "sync" / name, std::ios::binary);
                out << to_json(SyncFile{r.run, rec, fp}).dump(1) << '\n';
            }
        }
    }
}

}  // namespace coopslam
