#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "djqe.hpp"

namespace fs = std::filesystem;
using namespace djqe;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("djqe_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Outcome run(const std::string& args) const {
        const std::string out = path("stdout.txt"), err = path("stderr.txt");
        const std::string cmd = std::string(DJQE_CLI) + " " + args + " >" + out + " 2>" + err;
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    }

    fs::path dir_;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(Cli, GenerateWritesHeaderAndRows) {
    const auto r = run("generate --scenario s1 --n 100 --seed 3 --out " + path("d.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string body = slurp(path("d.csv"));
    EXPECT_EQ(count_lines(body), 101u);
    const std::string header = body.substr(0, body.find('\n'));
    EXPECT_EQ(std::count(header.begin(), header.end(), ',') + 1, 22);
    EXPECT_NE(r.out.find("oracle value"), std::string::npos);

    ASSERT_EQ(run("generate --scenario s1 --n 100 --seed 3 --out " + path("e.csv")).code, 0);
    EXPECT_EQ(slurp(path("e.csv")), body);
}

TEST_F(Cli, GenerateRejectsTooFewFeatures) {
    const auto r = run("generate --scenario s4 --n 10 --p 2 --out " + path("d.csv"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("p >= 3"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("d.csv")));
}

TEST_F(Cli, EvaluateConstantRewards) {
    std::ofstream csv(path("c.csv"));
    csv << "x_1,a,y\n";
    for (int i = 0; i < 60; ++i) csv << (i % 7) / 7.0 << ',' << (i * 37 % 60) / 60.0 << ",2.5\n";
    csv.close();
    const auto r = run("evaluate --data " + path("c.csv") + " --policy constant:0.4 --gamma 0.01 --m 6 --out " +
                       path("r.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(path("r.json")));
    EXPECT_NEAR(j["report"]["value"].get<double>(), 2.5, 1e-3);
    EXPECT_EQ(j["config"]["m"].get<int>(), 6);
    EXPECT_EQ(j["report"]["estimator_variant"].get<std::string>(), "standard-dr");
}

TEST_F(Cli, EvaluateNoiselessScenarioOne) {
    ASSERT_EQ(run("generate --scenario s1 --p 2 --n 400 --noise-sd 0 --seed 12 --out " + path("d.csv")).code, 0);
    const std::string common = "evaluate --data " + path("d.csv") + " --policy s1-optimal --m 20 --gamma 0.01 ";
    const auto r = run(common + "--dump-bellman " + path("b.csv") + " --out " + path("r.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(path("r.json")));
    EXPECT_NEAR(j["report"]["value"].get<double>(), 4.0 / 3.0, 0.05);
    EXPECT_NE(r.out.find("changepoints 0.35 0.65"), std::string::npos) << r.out;

    ASSERT_EQ(run(common + "--estimator-variant paper-literal --out " + path("p.json")).code, 0);
    const auto lit = nlohmann::json::parse(slurp(path("p.json")));
    EXPECT_EQ(lit["report"]["estimator_variant"].get<std::string>(), "paper-literal");
    const std::string bell = slurp(path("b.csv"));
    EXPECT_EQ(bell.substr(0, bell.find('\n')), "fold,v,bell,tau");
    EXPECT_EQ(count_lines(bell), 1u + 2u * 21u);
}

TEST_F(Cli, MissingInputIsAnIoError) {
    const auto r = run("evaluate --data " + path("nope.csv") + " --policy toy");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST_F(Cli, BenchmarkArgumentErrors) {
    const auto bad = run("benchmark --scenario s1 --n 30 --methods ipw");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("djqe, kernel-dr"), std::string::npos) << bad.err;
    EXPECT_EQ(run("evaluate --data x.csv --policy toy --gamma 0.1 --gamma-grid 0.1,0.2").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, BenchmarkWithOneReplicationWarns) {
    const auto r = run("benchmark --scenario s4 --n 40 --p 3 --reps 1 --methods djqe,kernel-dr --gamma 0.05 "
                       "--mlp-epochs 30 --out " + path("b.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("reps = 1"), std::string::npos);
    const std::string csv = slurp(path("b.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "scenario,n,method,bias,sd,mse,reps,seed");
    EXPECT_EQ(count_lines(csv), 3u);
}

TEST_F(Cli, CalibrateNoiselessData) {
    ASSERT_EQ(run("generate --scenario s4 --p 3 --n 300 --noise-sd 0 --seed 4 --out " + path("d.csv")).code, 0);
    const auto r = run("calibrate --data " + path("d.csv") + " --seed 2 --out " + path("cal"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(path("cal.calibration.json")));
    EXPECT_LE(j["sigma_hat"].get<double>(), 0.1);
    EXPECT_EQ(count_lines(slurp(path("cal.sim.csv"))), 501u);
    EXPECT_EQ(count_lines(slurp(path("cal.policy.csv"))), 501u);
}

TEST_F(Cli, CalibrateFailureWritesNothing) {
    const auto r = run("calibrate --data " + path("missing.csv") + " --out " + path("cal"));
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(fs::exists(path("cal.sim.csv")));
    EXPECT_FALSE(fs::exists(path("cal.policy.csv")));
    EXPECT_FALSE(fs::exists(path("cal.calibration.json")));
}

TEST_F(Cli, ConfigFileSuppliesDefaultsAndFlagsOverride) {
    ASSERT_EQ(run("generate --scenario s1 --n 80 --seed 5 --out " + path("d.csv")).code, 0);
    std::ofstream cfg(path("c.toml"));
    cfg << "[evaluate]\ngamma = 0.125\nm = 5\nmlp-epochs = 20\n";
    cfg.close();
    const std::string base = "--config " + path("c.toml") + " evaluate --data " + path("d.csv") + " --policy toy";

    ASSERT_EQ(run(base + " --out " + path("a.json")).code, 0);
    const auto a = nlohmann::json::parse(slurp(path("a.json")));
    EXPECT_DOUBLE_EQ(a["report"]["gamma"].get<double>(), 0.125);
    EXPECT_EQ(a["config"]["m"].get<int>(), 5);

    ASSERT_EQ(run(base + " --m 8 --out " + path("b.json")).code, 0);
    const auto b = nlohmann::json::parse(slurp(path("b.json")));
    EXPECT_EQ(b["config"]["m"].get<int>(), 8);
    EXPECT_DOUBLE_EQ(b["report"]["gamma"].get<double>(), 0.125);
}
