// Command-line front end: run experiments, validate configs, replay fusion.

#include "coopslam/coopslam.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace coopslam;

namespace {

struct RunOptions {
    std::string config;
    std::vector<std::string> modes;
    std::optional<std::uint64_t> seed;
    std::optional<int> nmc;
    std::optional<std::size_t> particles;
    std::string out = "out";
    std::string format = "csv";
    bool quiet = false;
};

RunConfig resolve_config(const std::string& path) {
    RunConfig cfg;
    if (!path.empty()) cfg = load_config(path, cfg);
    return apply_env_overrides(cfg);
}

int report_config_error(const ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    return 2;
}

int cmd_run(const RunOptions& o) {
    RunConfig base;
    try {
        base = resolve_config(o.config);
    } catch (const ConfigError& e) {
        return report_config_error(e);
    }
    if (o.seed) base.seed = *o.seed;
    if (o.nmc) base.monte_carlo_runs = *o.nmc;
    if (o.particles) base.particles = *o.particles;

    std::vector<RunMode> modes;
    try {
        for (const auto& m : o.modes) modes.push_back(run_mode_from_string(m));
    } catch (const std::exception& e) {
        std::cerr << "invalid configuration:\n  mode: " << e.what() << '\n';
        return 2;
    }
    if (modes.empty()) modes.push_back(base.mode);

    if (const auto v = validate(base); !v.empty()) {
        std::cerr << "invalid configuration:\n";
        for (const auto& p : v) std::cerr << "  " << p << '\n';
        return 2;
    }
    const TableFormat fmt = o.format == "json" ? TableFormat::json : TableFormat::csv;
    const fs::path root(o.out);
    fs::create_directories(root);

    Table bars;
    std::size_t diverged_total = 0;
    for (RunMode mode : modes) {
        RunConfig cfg = base;
        cfg.mode = mode;
        const fs::path dir = modes.size() == 1 ? root : root / to_string(mode);
        if (!o.quiet) {
            std::cerr << "mode " << to_string(mode) << ": " << cfg.monte_carlo_runs << " runs, " << cfg.particles
                      << " particles, seed " << cfg.seed << '\n';
        }
        const auto mc = run_monte_carlo(cfg, [&](const RunResult& r) {
            if (o.quiet) return;
            std::cerr << "  run " << r.run << (r.diverged ? " diverged: " + r.divergence_reason : " done") << '\n';
        });
        export_results(mc, dir, fmt);
        const Table summary = metrics_summary_table(mc);
        if (bars.columns.empty()) bars.columns = summary.columns;
        bars.rows.insert(bars.rows.end(), summary.rows.begin(), summary.rows.end());
        for (const auto& r : mc.runs) {
            if (!r.diverged) continue;
            ++diverged_total;
            std::cerr << "warning: " << to_string(mode) << " run " << r.run
                      << " diverged and is excluded from the metrics (" << r.divergence_reason << ")\n";
        }
    }
    write_table(bars, root, "plot_state_errors", fmt);
    if (!o.quiet) {
        std::cerr << "divergent runs: " << diverged_total << '\n';
        std::cerr << "results written to " << root.string() << '\n';
    }
    return 0;
}

int cmd_validate(const std::string& path) {
    RunConfig cfg;
    try {
        cfg = resolve_config(path);
    } catch (const ConfigError& e) {
        std::cout << "violations:\n";
        for (const auto& p : e.problems()) std::cout << "  " << p << '\n';
        return 1;
    }
    const auto v = validate(cfg);
    if (v.empty()) {
        std::cout << "configuration is valid\n";
        return 0;
    }
    std::cout << "violations:\n";
    for (const auto& p : v) std::cout << "  " << p << '\n';
    return 1;
}

int cmd_fuse(const std::string& input, const std::string& out) {
    const SyncFile s = load_sync_file(input);
    FusionCenter center(s.params);
    center.reset(s.record.bs_before);
    center.receive(s.record.uplink);
    const bool same = identical(center.map(), s.record.bs_after);
    if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        f << Json{{"schema_version", kSchemaVersion}, {"bs_after", to_json(center.map())}}.dump(1) << '\n';
    }
    std::cout << (same ? "replay matches the recorded BS map\n" : "replay differs from the recorded BS map\n");
    return same ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cooperative mmWave positioning and mapping simulator"};
    app.require_subcommand(1);

    RunOptions ro;
    auto* run = app.add_subcommand("run", "run Monte-Carlo experiments and export results");
    run->add_option("--config", ro.config, "key = value configuration file")->check(CLI::ExistingFile);
    run->add_option("--mode", ro.modes,
                    "prediction-only, los-only, local-phd, fusion-ul or fusion-uldl (repeatable)")
        ->delimiter(',');
    run->add_option("--seed", ro.seed, "master seed");
    run->add_option("--nmc", ro.nmc, "number of Monte-Carlo runs");
    run->add_option("--particles", ro.particles, "particles per vehicle");
    run->add_option("--out", ro.out, "output directory")->capture_default_str();
    run->add_option("--format", ro.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    run->add_flag("--quiet", ro.quiet, "suppress progress output");

    std::string validate_path;
    auto* val = app.add_subcommand("validate", "check a configuration without running");
    val->add_option("--config", validate_path, "configuration file")->check(CLI::ExistingFile);

    std::string fuse_in, fuse_out;
    auto* fuse = app.add_subcommand("fuse", "replay the fusion of an exported sync event");
    fuse->add_option("--input", fuse_in, "sync JSON file")->required()->check(CLI::ExistingFile);
    fuse->add_option("--out", fuse_out, "write the replayed BS map here");

    auto* print = app.add_subcommand("print-config", "print the resolved configuration");
    std::string print_path;
    print->add_option("--config", print_path, "configuration file")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(ro);
        if (*val) return cmd_validate(validate_path);
        if (*fuse) return cmd_fuse(fuse_in, fuse_out);
        if (*print) {
            std::cout << to_config_text(resolve_config(print_path));
            return 0;
        }
    } catch (const ConfigError& e) {
        return report_config_error(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
