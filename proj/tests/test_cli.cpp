#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = NLFB_CLI;
const std::string kConfigs = NLFB_CONFIG_DIR;

struct Result {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("nlfb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args) const
    {
        const std::string cmd = "cd '" + dir_.string() + "' && NLFB_CACHE_DIR='" + (dir_ / "cache").string() +
                                "' '" + kCli + "' " + args + " > out.txt 2> err.txt";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir_ / "out.txt"), slurp(dir_ / "err.txt")};
    }

    fs::path write(const std::string& name, const std::string& text) const
    {
        std::ofstream(dir_ / name) << text;
        return dir_ / name;
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, ValidateGoodConfig)
{
    const auto r = run("validate --config " + kConfigs + "/good.cfg");
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("accepted"), std::string::npos);
}

TEST_F(Cli, MissingConfigIs66)
{
    EXPECT_EQ(run("simulate --config missing.cfg").code, 66);
    EXPECT_EQ(run("validate --config missing.cfg").code, 66);
}

TEST_F(Cli, InfiniteSpeedIs1)
{
    const auto r = run("semiwave --config " + kConfigs + "/fat_tail_beta2.5.cfg");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("infinite speed: (J1) fails"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorsAre64)
{
    EXPECT_EQ(run("frobnicate").code, 64);
    EXPECT_EQ(run("").code, 64);
    EXPECT_EQ(run("simulate").code, 64);
    EXPECT_EQ(run("fit --model cubic --traj x.csv").code, 64);
    EXPECT_EQ(run("eigen --config " + kConfigs + "/good.cfg").code, 64);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, ModelAndNumericalErrors)
{
    write("bad.cfg", "d = 1\ncolour = red\n");
    EXPECT_EQ(run("simulate --config bad.cfg").code, 1);
    // dt (d + Lip f) = 2 > 0.9
    write("unstable.cfg", "dt = 1\nt_end = 2\nout_dir = o\n");
    const auto r = run("simulate --config unstable.cfg");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("dt"), std::string::npos);
    // L* does not exist when f'(0) >= d
    EXPECT_EQ(run("eigen --config " + kConfigs + "/good.cfg --find-lstar").code, 1);
}

TEST_F(Cli, SimulateWritesDeterministicOutputs)
{
    write("run.cfg", "h0 = 2\nt_end = 6\nsnapshot_stride = 10\nout_dir = first\n");
    const auto r1 = run("simulate --config run.cfg");
    ASSERT_EQ(r1.code, 0) << r1.err;
    const auto summary = json::parse(slurp(dir_ / "first/summary.json"));
    EXPECT_EQ(summary["verdict"], "spreading");
    EXPECT_NEAR(summary["t_final"].get<double>(), 6.0, 1e-9);
    EXPECT_GT(summary["h_final"].get<double>(), 2.0);
    EXPECT_EQ(summary["config_echo"]["h0"], "2");

    const auto manifest = json::parse(slurp(dir_ / "first/manifest.json"));
    EXPECT_EQ(manifest["command"], "simulate");
    EXPECT_EQ(manifest["kernel_hash"].get<std::string>().size(), 16u);
    ASSERT_GE(manifest["outputs"].size(), 4u);
    for (const auto& f : manifest["outputs"]) {
        EXPECT_TRUE(fs::exists(dir_ / "first" / f.get<std::string>())) << f;
    }
    EXPECT_TRUE(fs::exists(dir_ / "first/snapshot_0.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "first/snapshot_2.csv"));
    const std::string traj = slurp(dir_ / "first/trajectory.csv");
    EXPECT_EQ(traj.substr(0, traj.find('\n')), "t,h,hdot,u_at_0,u_max,mass");
    ASSERT_FALSE(fs::is_empty(dir_ / "cache"));

    // second run reads the cached tables and must reproduce every byte
    const auto r2 = run("simulate --config run.cfg --out second");
    ASSERT_EQ(r2.code, 0) << r2.err;
    for (const char* name : {"trajectory.csv", "snapshot_0.csv", "snapshot_6.csv"}) {
        EXPECT_EQ(slurp(dir_ / "first" / name), slurp(dir_ / "second" / name)) << name;
    }
}

TEST_F(Cli, SemiwaveEigenTableFitSweep)
{
    write("disc.cfg", "out_dir = sw\nsemiwave.dx = 0.02\n");
    auto r = run("semiwave --config disc.cfg --csv profile.csv");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto sw = json::parse(r.out);
    EXPECT_NEAR(sw["c0"].get<double>(), 0.1075, 1e-3);
    EXPECT_LT(sw["residual_pde"].get<double>(), 1e-6);
    EXPECT_TRUE(fs::exists(dir_ / "profile.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "sw/manifest.json"));

    r = run("eigen --config " + kConfigs + "/threshold.cfg --find-lstar --L 0.5");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto eig = json::parse(r.out);
    EXPECT_NEAR(eig["L_star"].get<double>(), 0.7926, 1e-3);
    EXPECT_LT(eig["lambda1"].get<double>(), 0.0);

    write("table.cfg", "dr = 0.25\nout_dir = kt\n");
    r = run("kernel-table --config table.cfg --rmax 1");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream rows(slurp(dir_ / "kt/kernel_table.csv"));
    std::string line;
    int n = 0;
    while (std::getline(rows, line)) {
        ++n;
    }
    EXPECT_EQ(n, 1 + 5 * 5);

    std::ofstream(dir_ / "line.csv") << "t,h\n";
    {
        std::ofstream traj(dir_ / "line.csv", std::ios::app);
        for (int i = 1; i <= 100; ++i) {
            traj << i << ',' << 3.0 * i + 1.0 << '\n';
        }
    }
    r = run("fit --model speed --traj line.csv --plot-data plot.dat");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(json::parse(r.out)["a"].get<double>(), 3.0, 1e-12);
    EXPECT_FALSE(slurp(dir_ / "plot.dat").empty());
    EXPECT_EQ(run("fit --model logshift --traj line.csv").code, 1);
    EXPECT_EQ(run("fit --model speed --traj nowhere.csv").code, 66);

    write("sweep.cfg", std::string("f.scale = 0.5\nh0 = 0.4\ndr = 0.02\nt_end = 100\nstop_on_verdict = true\n") +
                           "out_dir = swp\n");
    r = run("sweep --config sweep.cfg --param mu --values 0.05,10 --jobs 2");
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string table = slurp(dir_ / "swp/sweep_mu.csv");
    EXPECT_EQ(table, r.out);
    EXPECT_NE(table.find("0.050000000000000003,vanishing"), std::string::npos) << table;
    EXPECT_NE(table.find("\n10,spreading"), std::string::npos) << table;
    EXPECT_EQ(run("sweep --config sweep.cfg --param colour --values 1").code, 1);
}
