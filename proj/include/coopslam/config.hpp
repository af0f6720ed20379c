#pragma once

// Plain-text run configuration.
//
// One `key = value` per line, `#` starts a comment. Vector values are comma
// separated; lists of vectors separate the entries with `;`. Every physical
// quantity carries its unit in the key name. Any key can be overridden from
// the environment as COOPSLAM_<KEY>, with the key upper-cased and '.'
// replaced by '_'.

#include "coopslam/sim.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace coopslam {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s;
        for (const auto& x : p) s += (s.empty() ? "" : "\n") + x;
        return s;
    }
    std::vector<std::string> problems_;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

inline double parse_double(const std::string& s) {
    const std::string t = trim(s);
    // accept the symbolic constant for readability of angle entries
    if (t == "pi") return kPi;
    if (t == "-pi") return -kPi;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw std::invalid_argument("not a number: '" + t + "'");
    }
    return v;
}

template <class Int>
Int parse_int(const std::string& s) {
    const std::string t = trim(s);
    Int v{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw std::invalid_argument("not an integer: '" + t + "'");
    }
    return v;
}

inline bool parse_bool(const std::string& s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw std::invalid_argument("not a boolean: '" + t + "'");
}

inline std::vector<double> parse_list(const std::string& s, std::size_t n) {
    const auto parts = split(s, ',');
    if (parts.size() != n) {
        throw std::invalid_argument("expected " + std::to_string(n) + " comma-separated values, got " +
                                    std::to_string(parts.size()));
    }
    std::vector<double> v;
    for (const auto& p : parts) v.push_back(parse_double(p));
    return v;
}

inline Vec3 parse_vec3(const std::string& s) {
    const auto v = parse_list(s, 3);
    return {v[0], v[1], v[2]};
}

/// Shortest representation that parses back to the same double.
inline std::string fmt(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string fmt(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }

}  // namespace config_detail

/// One configuration key: how to read it into and write it from a RunConfig.
struct ConfigKey {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
    using namespace config_detail;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto scalar = [&k](std::string name, auto member) {
            k.push_back({std::move(name), [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); },
                         [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }});
        };
        auto integer = [&k](std::string name, auto member) {
            k.push_back({std::move(name),
                         [member](RunConfig& c, const std::string& v) {
                             using T = std::remove_reference_t<decltype(member(c))>;
                             member(c) = parse_int<T>(v);
                         },
                         [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }});
        };

        // run
        k.push_back({"mode", [](RunConfig& c, const std::string& v) { c.mode = run_mode_from_string(trim(v)); },
                     [](const RunConfig& c) { return std::string(to_string(c.mode)); }});
        integer("particles", [](RunConfig& c) -> std::size_t& { return c.particles; });
        integer("monte_carlo_runs", [](RunConfig& c) -> int& { return c.monte_carlo_runs; });
        integer("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });

        // environment
        k.push_back({"bs_position_m", [](RunConfig& c, const std::string& v) { c.scenario.bs = parse_vec3(v); },
                     [](const RunConfig& c) { return fmt(c.scenario.bs); }});
        k.push_back({"va_positions_m",
                     [](RunConfig& c, const std::string& v) {
                         c.scenario.vas.clear();
                         for (const auto& e : split(v, ';')) {
                             if (!e.empty()) c.scenario.vas.push_back(parse_vec3(e));
                         }
                     },
                     [](const RunConfig& c) {
                         std::string s;
                         for (const auto& x : c.scenario.vas) s += (s.empty() ? "" : "; ") + fmt(x);
                         return s;
                     }});
        k.push_back({"sp_xy_m",
                     [](RunConfig& c, const std::string& v) {
                         c.scenario.sp_xy.clear();
                         for (const auto& e : split(v, ';')) {
                             if (e.empty()) continue;
                             const auto xy = parse_list(e, 2);
                             c.scenario.sp_xy.emplace_back(xy[0], xy[1]);
                         }
                     },
                     [](const RunConfig& c) {
                         std::string s;
                         for (const auto& x : c.scenario.sp_xy) {
                             s += (s.empty() ? "" : "; ") + fmt(x.x()) + ", " + fmt(x.y());
                         }
                         return s;
                     }});
        scalar("sp_z_min_m", [](RunConfig& c) -> double& { return c.scenario.sp_z_min; });
        scalar("sp_z_max_m", [](RunConfig& c) -> double& { return c.scenario.sp_z_max; });

        // vehicles
        for (int n = 1; n <= 2; ++n) {
            const std::size_t i = static_cast<std::size_t>(n - 1);
            const std::string p = "vehicle." + std::to_string(n) + ".";
            k.push_back({p + "position_m",
                         [i](RunConfig& c, const std::string& v) { c.scenario.initial[i].position = parse_vec3(v); },
                         [i](const RunConfig& c) { return fmt(c.scenario.initial[i].position); }});
            scalar(p + "heading_rad", [i](RunConfig& c) -> double& { return c.scenario.initial[i].heading; });
            scalar(p + "speed_mps", [i](RunConfig& c) -> double& { return c.scenario.initial[i].speed; });
            scalar(p + "turn_rate_radps", [i](RunConfig& c) -> double& { return c.scenario.initial[i].turn_rate; });
            scalar(p + "clock_bias_m", [i](RunConfig& c) -> double& { return c.scenario.initial[i].clock_bias; });
            integer(p + "first_sync_step", [i](RunConfig& c) -> int& { return c.scenario.sync.first_step[i]; });
        }
        scalar("prior_sigma_xy_m", [](RunConfig& c) -> double& { return c.scenario.prior_sigma_xy; });
        scalar("prior_sigma_heading_rad", [](RunConfig& c) -> double& { return c.scenario.prior_sigma_heading; });
        scalar("prior_sigma_bias_m", [](RunConfig& c) -> double& { return c.scenario.prior_sigma_bias; });

        // dynamics
        scalar("dt_s", [](RunConfig& c) -> double& { return c.scenario.dt; });
        integer("steps", [](RunConfig& c) -> int& { return c.scenario.steps; });
        scalar("sigma_x_m", [](RunConfig& c) -> double& { return c.scenario.process_noise.sigma_x; });
        scalar("sigma_y_m", [](RunConfig& c) -> double& { return c.scenario.process_noise.sigma_y; });
        scalar("sigma_heading_rad", [](RunConfig& c) -> double& { return c.scenario.process_noise.sigma_heading; });
        scalar("sigma_bias_m", [](RunConfig& c) -> double& { return c.scenario.process_noise.sigma_bias; });

        // measurements
        k.push_back({"noise_range_var_m2",
                     [](RunConfig& c, const std::string& v) { c.scenario.noise(0, 0) = parse_double(v); },
                     [](const RunConfig& c) { return fmt(c.scenario.noise(0, 0)); }});
        k.push_back({"noise_angle_var_rad2",
                     [](RunConfig& c, const std::string& v) {
                         const auto a = parse_list(v, 4);
                         for (int j = 0; j < 4; ++j) c.scenario.noise(j + 1, j + 1) = a[static_cast<std::size_t>(j)];
                     },
                     [](const RunConfig& c) {
                         std::string s;
                         for (int j = 1; j < 5; ++j) s += (j > 1 ? ", " : "") + fmt(c.scenario.noise(j, j));
                         return s;
                     }});
        scalar("phd_noise_scale", [](RunConfig& c) -> double& { return c.scenario.phd_noise_scale; });
        scalar("p_detect", [](RunConfig& c) -> double& { return c.scenario.detection.p_detect; });
        scalar("r_fov_m", [](RunConfig& c) -> double& { return c.scenario.detection.fov_radius; });
        scalar("clutter_rate", [](RunConfig& c) -> double& { return c.scenario.detection.clutter_rate; });
        scalar("clutter_max_range_m", [](RunConfig& c) -> double& { return c.scenario.detection.max_range; });
        k.push_back({"detection_policy",
                     [](RunConfig& c, const std::string& v) {
                         const std::string t = trim(v);
                         if (t == "at-mean") c.scenario.detection.policy = DetectionPolicy::at_mean;
                         else if (t == "robust") c.scenario.detection.policy = DetectionPolicy::robust;
                         else throw std::invalid_argument("expected at-mean or robust, got '" + t + "'");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.scenario.detection.policy == DetectionPolicy::robust ? "robust"
                                                                                                   : "at-mean");
                     }});

        // filter and fusion
        scalar("birth_weight", [](RunConfig& c) -> double& { return c.scenario.birth_weight; });
        scalar("prune_truncation", [](RunConfig& c) -> double& { return c.scenario.prune.truncation; });
        scalar("prune_merge_sq", [](RunConfig& c) -> double& { return c.scenario.prune.merge_sq; });
        integer("prune_max_components", [](RunConfig& c) -> std::size_t& { return c.scenario.prune.max_components; });
        scalar("threshold_va", [](RunConfig& c) -> double& { return c.scenario.threshold_va; });
        scalar("threshold_sp", [](RunConfig& c) -> double& { return c.scenario.threshold_sp; });
        scalar("gamma_d", [](RunConfig& c) -> double& { return c.scenario.gamma_d; });
        scalar("gamma_up", [](RunConfig& c) -> double& { return c.scenario.gamma_up; });
        integer("sync_period_steps", [](RunConfig& c) -> int& { return c.scenario.sync.period; });
        return k;
    }();
    return keys;
}

inline std::string env_name(const std::string& key) {
    std::string s = "COOPSLAM_";
    for (char ch : key) s += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

/// Applies `key = value` lines on top of `base`. All problems are collected
/// and reported together.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}, const std::string& origin = "config") {
    std::map<std::string, const ConfigKey*> index;
    for (const auto& k : config_keys()) index[k.name] = &k;
    std::vector<std::string> problems;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) {
            problems.push_back(where + ": expected 'key = value'");
            continue;
        }
        const std::string key = config_detail::trim(line.substr(0, eq));
        const std::string value = config_detail::trim(line.substr(eq + 1));
        const auto it = index.find(key);
        if (it == index.end()) {
            problems.push_back(where + ": unknown key '" + key + "'");
            continue;
        }
        try {
            it->second->set(base, value);
        } catch (const std::exception& e) {
            problems.push_back(where + ": " + key + ": " + e.what());
        }
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path + ": cannot open"});
    return parse_config(in, std::move(base), path);
}

/// Applies COOPSLAM_* environment overrides.
inline RunConfig apply_env_overrides(RunConfig cfg) {
    std::vector<std::string> problems;
    for (const auto& k : config_keys()) {
        const char* v = std::getenv(env_name(k.name).c_str());
        if (!v) continue;
        try {
            k.set(cfg, v);
        } catch (const std::exception& e) {
            problems.push_back(env_name(k.name) + ": " + e.what());
        }
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

/// Canonical text form; parsing it back yields the same configuration.
inline std::string to_config_text(const RunConfig& cfg) {
    std::string s;
    for (const auto& k : config_keys()) s += k.name + " = " + k.get(cfg) + "\n";
    return s;
}

/// Semantic checks. Returns one line per violation; empty means valid.
inline std::vector<std::string> validate(const RunConfig& cfg) {
    std::vector<std::string> v;
    const Scenario& sc = cfg.scenario;
    auto need = [&v](bool ok, const std::string& msg) {
        if (!ok) v.push_back(msg);
    };
    auto positive = [&need](double x, const std::string& key) { need(x > 0.0, key + ": must be > 0"); };
    auto non_negative = [&need](double x, const std::string& key) { need(x >= 0.0, key + ": must be >= 0"); };
    auto probability = [&need](double x, const std::string& key) {
        need(x >= 0.0 && x <= 1.0, key + ": must lie in [0, 1]");
    };

    need(cfg.particles >= 1, "particles: must be >= 1");
    need(cfg.monte_carlo_runs >= 1, "monte_carlo_runs: must be >= 1");

    need(!sc.vas.empty(), "va_positions_m: at least one VA is required");
    for (std::size_t i = 0; i < sc.vas.size(); ++i) {
        need((sc.vas[i] - sc.bs).norm() > 0.0,
             "va_positions_m: entry " + std::to_string(i + 1) + " coincides with the BS");
    }
    need(sc.sp_z_min <= sc.sp_z_max, "sp_z_min_m: must not exceed sp_z_max_m");
    need(sc.initial.size() == 2, "vehicle: exactly two vehicles are supported");

    positive(sc.dt, "dt_s");
    need(sc.steps >= 1, "steps: must be >= 1");
    non_negative(sc.process_noise.sigma_x, "sigma_x_m");
    non_negative(sc.process_noise.sigma_y, "sigma_y_m");
    non_negative(sc.process_noise.sigma_heading, "sigma_heading_rad");
    non_negative(sc.process_noise.sigma_bias, "sigma_bias_m");
    non_negative(sc.prior_sigma_xy, "prior_sigma_xy_m");
    non_negative(sc.prior_sigma_heading, "prior_sigma_heading_rad");
    non_negative(sc.prior_sigma_bias, "prior_sigma_bias_m");

    Eigen::LLT<Mat5> llt(sc.noise);
    need(llt.info() == Eigen::Success && (sc.noise.diagonal().array() > 0.0).all(),
         "noise_range_var_m2/noise_angle_var_rad2: measurement covariance must be positive definite");
    positive(sc.phd_noise_scale, "phd_noise_scale");
    probability(sc.detection.p_detect, "p_detect");
    positive(sc.detection.fov_radius, "r_fov_m");
    non_negative(sc.detection.clutter_rate, "clutter_rate");
    positive(sc.detection.max_range, "clutter_max_range_m");

    positive(sc.birth_weight, "birth_weight");
    non_negative(sc.prune.truncation, "prune_truncation");
    positive(sc.prune.merge_sq, "prune_merge_sq");
    need(sc.prune.max_components >= 1, "prune_max_components: must be >= 1");
    positive(sc.threshold_va, "threshold_va");
    positive(sc.threshold_sp, "threshold_sp");
    need(sc.threshold_va >= sc.prune.truncation, "threshold_va: must not be below prune_truncation");
    need(sc.threshold_sp >= sc.prune.truncation, "threshold_sp: must not be below prune_truncation");
    probability(sc.gamma_d, "gamma_d");
    positive(sc.gamma_up, "gamma_up");

    need(sc.sync.period >= 1, "sync_period_steps: must be >= 1");
    for (std::size_t i = 0; i < sc.sync.first_step.size(); ++i) {
        const std::string key = "vehicle." + std::to_string(i + 1) + ".first_sync_step";
        need(sc.sync.first_step[i] >= 1, key + ": must be >= 1");
        need(sc.sync.first_step[i] <= sc.steps, key + ": no sync happens within the run");
    }
    return v;
}

}  // namespace coopslam
