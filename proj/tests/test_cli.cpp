#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* p = std::getenv("COOPSLAM_CLI");
    return p ? p : "";
}

int run(const std::string& args) {
    const int rc = std::system((cli() + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t line_count(const fs::path& p) {
    const auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        if (cli().empty()) GTEST_SKIP() << "COOPSLAM_CLI not set";
        dir_ = fs::temp_directory_path() / ("coopslam_cli_" + std::string(
                                                ::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        if (!dir_.empty()) fs::remove_all(dir_);
    }
    fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunIsByteIdenticalAcrossInvocations) {
    const std::string common = " --mode fusion-uldl --nmc 2 --particles 8 --seed 4 --quiet --out ";
    ASSERT_EQ(run("run" + common + (dir_ / "a").string()), 0);
    ASSERT_EQ(run("run" + common + (dir_ / "b").string()), 0);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir_ / "a");
        ASSERT_TRUE(fs::exists(dir_ / "b" / rel)) << rel;
        EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / rel)) << rel;
        ++files;
    }
    EXPECT_GT(files, 10u);
}

TEST_F(Cli, RunExportsExpectedRows) {
    ASSERT_EQ(run("run --mode local-phd --nmc 2 --particles 5 --quiet --out " + dir_.string()), 0);
    // header + runs x vehicles x steps
    EXPECT_EQ(line_count(dir_ / "states.csv"), 1u + 2u * 2u * 40u);
    EXPECT_EQ(line_count(dir_ / "runs.csv"), 1u + 2u);
    EXPECT_TRUE(fs::exists(dir_ / "gospa.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "plot_state_errors.csv"));
    EXPECT_FALSE(fs::exists(dir_ / "sync"));
}

TEST_F(Cli, MultipleModesGetSubdirectories) {
    ASSERT_EQ(run("run --mode prediction-only,los-only --nmc 1 --particles 5 --format json --quiet --out " +
                  dir_.string()),
              0);
    EXPECT_TRUE(fs::exists(dir_ / "prediction-only" / "states.json"));
    EXPECT_TRUE(fs::exists(dir_ / "los-only" / "states.json"));
    EXPECT_TRUE(fs::exists(dir_ / "plot_state_errors.json"));
}

TEST_F(Cli, FuseReplaysExportedSync) {
    ASSERT_EQ(run("run --mode fusion-ul --nmc 1 --particles 5 --quiet --out " + dir_.string()), 0);
    const auto f = dir_ / "sync" / "run0_k10_vehicle1.json";
    ASSERT_TRUE(fs::exists(f));
    EXPECT_EQ(run("fuse --input " + f.string()), 0);
}

TEST_F(Cli, ValidateReportsViolations) {
    const auto good = dir_ / "good.cfg";
    const auto bad = dir_ / "bad.cfg";
    std::ofstream(good) << "particles = 10\n";
    std::ofstream(bad) << "r_fov_m = -1\nprune_merge_sq = 0\n";
    EXPECT_EQ(run("validate --config " + good.string()), 0);
    EXPECT_EQ(run("validate --config " + bad.string()), 1);
    EXPECT_EQ(run("run --nmc 1 --particles 2 --quiet --config " + bad.string() + " --out " + (dir_ / "x").string()),
              2);
    EXPECT_FALSE(fs::exists(dir_ / "x"));
}

TEST_F(Cli, UnknownModeIsRejected) {
    EXPECT_EQ(run("run --mode nonsense --quiet --out " + dir_.string()), 2);
}
