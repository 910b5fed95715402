#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "rawmodel/compare.hpp"
#include "rawmodel/io.hpp"

namespace fs = std::filesystem;
using namespace rawmodel;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rawmodel_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(RAWMODEL_CLI) + " " + args + " > " + path("stdout.txt") +
                            " 2> " + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const { return read_text_file(path(name)); }

  TimeDistribution csv(const std::string& name) const {
    std::istringstream is(read(name));
    return read_distribution_csv(is);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ModelWritesUniformDistributionForOneStation) {
  ASSERT_EQ(run("model --paper-params --n 1 --out " + path("m.csv")), 0);
  const auto d = csv("m.csv");
  ASSERT_EQ(d.size(), 16u);
  for (const auto& a : d.atoms()) EXPECT_DOUBLE_EQ(a.probability, 1.0 / 16);
  EXPECT_TRUE(fs::exists(path("m_pb.csv")));
  EXPECT_TRUE(fs::exists(path("m_quantiles.csv")));
  EXPECT_TRUE(fs::exists(path("m_summary.csv")));
  const auto manifest = nlohmann::json::parse(read("m.csv.manifest.json"));
  EXPECT_EQ(manifest.at("command"), "model");
  EXPECT_EQ(manifest.at("inputs").at("params").at("cw_max"), 1024);
  EXPECT_EQ(manifest.at("outputs").size(), 4u);
}

TEST_F(Cli, JsonOutputIsReproducible) {
  ASSERT_EQ(run("model --paper-params --n 7 --format json --out " + path("a.json")), 0);
  ASSERT_EQ(run("model --paper-params --n 7 --format json --out " + path("b.json")), 0);
  EXPECT_EQ(read("a.json"), read("b.json"));
  const auto doc = nlohmann::json::parse(read("a.json"));
  EXPECT_TRUE(doc.contains("p_a"));
  EXPECT_TRUE(doc.contains("p_b"));
  EXPECT_EQ(doc.at("quantiles").at("a").size(), 4u);
}

TEST_F(Cli, ExplicitParametersAreAllRequiredWithoutPreset) {
  EXPECT_EQ(run("model --n 3 --cw-min 16 --out " + path("x.csv")), 1);
  EXPECT_EQ(run("model --paper-params --out " + path("x.csv")), 1);
  EXPECT_EQ(run("model --paper-params --n 3 --format xml --out " + path("x.csv")), 1);
  EXPECT_EQ(run("model --paper-params --n 3 --cw-min 64 --cw-max 16 --out " + path("x.csv")), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("model --n 2 --cw-min 4 --cw-max 8 --retry-limit 3 --te-us 9 --ts-us 100 "
                "--tc-us 80 --out " + path("ok.csv")),
            0);
}

TEST_F(Cli, SimulationIsDeterministic) {
  const std::string args = "simulate --paper-params --n 4 --runs 5000 --seed 9 --out ";
  ASSERT_EQ(run(args + path("s1.csv")), 0);
  ASSERT_EQ(run(args + path("s2.csv") + " --threads 2"), 0);
  EXPECT_EQ(read("s1.csv"), read("s2.csv"));
  EXPECT_EQ(read("s1_pb.csv"), read("s2_pb.csv"));
  EXPECT_EQ(run("simulate --paper-params --n 4 --runs 0 --out " + path("s3.csv")), 1);
}

TEST_F(Cli, CompareModelAgainstSimulation) {
  ASSERT_EQ(run("model --paper-params --n 1 --out " + path("m.csv")), 0);
  ASSERT_EQ(run("simulate --paper-params --n 1 --runs 1000000 --seed 3 --out " + path("s.csv")),
            0);
  EXPECT_EQ(run("compare --model " + path("m.csv") + " --sim " + path("s.csv") +
                " --tolerance 0.005 --out " + path("r.json")),
            0);
  const auto report = nlohmann::json::parse(read("r.json"));
  EXPECT_LT(report.at("kolmogorov_distance").get<double>(), 0.005);
  EXPECT_TRUE(report.at("pass").get<bool>());
  EXPECT_EQ(run("compare --model " + path("m.csv") + " --sim " + path("s.csv") +
                " --process B --tolerance 0.005"),
            0);
  EXPECT_EQ(run("compare --model " + path("m.csv") + " --sim " + path("s.csv") +
                " --tolerance 0"),
            4);
}

TEST_F(Cli, SevenStationsAgreeWithSimulation) {
  ASSERT_EQ(run("model --paper-params --n 7 --out " + path("m.csv")), 0);
  const auto gaps = peak_spacings(csv("m.csv"), Micros{52}, 1e-4);
  ASSERT_GE(gaps.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(gaps[i], Micros{42 * 52});
  ASSERT_EQ(run("simulate --paper-params --n 7 --runs 100000 --seed 7 --out " + path("s.csv")), 0);
  EXPECT_EQ(run("compare --model " + path("m.csv") + " --sim " + path("s.csv")), 0);
  EXPECT_NE(read("stdout.txt").find("PASS"), std::string::npos);
}

TEST_F(Cli, CompareRefusesMismatchedRuns) {
  ASSERT_EQ(run("model --paper-params --n 2 --out " + path("m.csv")), 0);
  ASSERT_EQ(run("simulate --paper-params --n 3 --runs 100 --out " + path("s.csv")), 0);
  EXPECT_EQ(run("compare --model " + path("m.csv") + " --sim " + path("s.csv")), 1);
  EXPECT_NE(read("stderr.txt").find("n_stations"), std::string::npos);
}

TEST_F(Cli, PlanReportsUnreachableTarget) {
  const std::string small = "--n 30 --cw-min 2 --cw-max 4 --retry-limit 1 --te-us 52 --ts-us "
                            "2184 --tc-us 2184 --p 1 ";
  EXPECT_EQ(run("plan " + small + "--q 0.9 --out " + path("p.csv")), 3);
  EXPECT_NE(read("stderr.txt").find("achievable maximum"), std::string::npos);
  ASSERT_EQ(run("plan --paper-params --n 20 --p 0.3 --q 0.9 --out " + path("ok.csv")), 0);
  EXPECT_EQ(read("ok.csv").rfind("duration_us,cumulative\n", 0), 0u);
  EXPECT_TRUE(fs::exists(path("ok_pmf.csv")));
  EXPECT_EQ(run("plan --paper-params --n 20 --p 0 --conditioning literal --out " + path("z.csv")),
            1);
}

TEST_F(Cli, GroupSweep) {
  ASSERT_EQ(run("groups --paper-params --n 12 --p 0.5 --q 0.9 --g-min 1 --g-max 12 --out " +
                path("g.csv")),
            0);
  std::istringstream is(read("g.csv"));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "g,group_size,slot_us,total_us,compliant");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 12);
  EXPECT_NE(read("stdout.txt").find("optimum g = "), std::string::npos);
  EXPECT_EQ(run("groups --paper-params --n 12 --g-max 13 --out " + path("h.csv")), 1);
}
