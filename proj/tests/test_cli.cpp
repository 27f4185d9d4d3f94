#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "support.hpp"

namespace fs = std::filesystem;
using relay::testing::data_dir;
using relay::testing::slurp;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("relay_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " " + std::string(RELAY_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() const { return slurp(dir_ / "stderr.txt"); }

  // Writes an open-field variant with `extra` appended to the top-level object.
  fs::path scenario(const std::string& extra) const {
    const std::string map = (data_dir() / "maps" / "open20.map").string();
    const fs::path p = dir_ / "case.scenario";
    std::ofstream(p) << R"({"version": 1, "id": "case", "map": {"file": ")" << map
                     << R"("}, "robots": {"ground": 10, "spawn": {"x0": 0.5, "y0": 8, "x1": 3.5, "y1": 12}},
                          "anchor": [2, 10], "targets": [[10, 10]])"
                     << extra << "}";
    return p;
  }

  fs::path bundled(const std::string& name) const { return data_dir() / "scenarios" / (name + ".scenario"); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunBundledOpenFieldWritesArtifacts) {
  EXPECT_EQ(run("run " + bundled("open_field").string() + " --out " + (dir_ / "o").string()), 0);
  for (const char* f : {"metrics.csv", "trajectory.csv", "decisions.csv", "final.svg"})
    EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;
}

TEST_F(Cli, OutputRootFromEnvironment) {
  EXPECT_EQ(run("run " + bundled("open_field").string() + " --quiet", "RELAY_OUTPUT_ROOT=" + (dir_ / "root").string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "root" / "open_field" / "metrics.csv"));
  EXPECT_EQ(slurp(dir_ / "stdout.txt"), "");
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("run " + scenario(R"(, "tick_budget": 1)").string() + " --out " + (dir_ / "a").string()), 2);
  EXPECT_EQ(run("run " + scenario(R"(, "radio": {"safe": 1.7})").string()), 3);
  EXPECT_NE(stderr_text().find("d_s < d_c"), std::string::npos);
  EXPECT_EQ(run("run " + scenario(R"(, "radio": {"sfae": 1.3})").string()), 3);
  EXPECT_NE(stderr_text().find("radio.sfae"), std::string::npos);
  EXPECT_EQ(run("run " + (dir_ / "nope.scenario").string()), 3);
  EXPECT_NE(run("frobnicate"), 0);
}

TEST_F(Cli, DumpMessages) {
  EXPECT_EQ(run("run " + scenario(R"(, "tick_budget": 20)").string() + " --dump-messages --out " + (dir_ / "d").string()), 2);
  const std::string dump = slurp(dir_ / "d" / "stigmergy.csv");
  EXPECT_EQ(dump.rfind("tick,robot,key,timestamp,writer,bytes\n", 0), 0u);
}

TEST_F(Cli, BatchSingleRepEqualsTheRun) {
  const auto spec = bundled("open_field");
  ASSERT_EQ(run("batch " + spec.string() + " --reps 1 --out " + (dir_ / "b").string()), 0);
  ASSERT_EQ(run("run " + spec.string() + " --out " + (dir_ / "r").string()), 0);
  const std::string runs = slurp(dir_ / "b" / "batch_runs.csv");
  EXPECT_EQ(runs, slurp(dir_ / "r" / "metrics.csv"));
  const std::string summary = slurp(dir_ / "b" / "summary.csv");
  EXPECT_NE(summary.find("open_field,none,NA,1,1,"), std::string::npos);
}

TEST_F(Cli, BatchIsDeterministicAndSweeps) {
  const std::string args = "batch " + scenario(R"(, "tick_budget": 400)").string() +
                           " --reps 2 --seed 7 --sweep links --values 1,2 --out ";
  ASSERT_EQ(run(args + (dir_ / "x").string()), 0);
  ASSERT_EQ(run(args + (dir_ / "y").string()), 0);
  for (const char* f : {"summary.csv", "batch_links_1.csv", "batch_links_2.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "x" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "x" / f), slurp(dir_ / "y" / f)) << f;
  }
  const std::string rows = slurp(dir_ / "x" / "batch_links_1.csv");
  EXPECT_NE(rows.find("case,7,"), std::string::npos);
  EXPECT_NE(rows.find("case,8,"), std::string::npos);
  EXPECT_EQ(run("batch " + scenario("").string() + " --reps 1 --sweep colour --values 1"), 3);
  EXPECT_EQ(run("batch " + scenario(R"(, "radio": {"safe": 1.7})").string() + " --reps 1"), 3);
}

TEST_F(Cli, Render) {
  ASSERT_EQ(run("run " + bundled("open_field").string() + " --out " + (dir_ / "o").string()), 0);
  const std::string csv = (dir_ / "o" / "trajectory.csv").string();
  EXPECT_EQ(run("render " + csv + " --tick 0 --scenario " + bundled("open_field").string() + " --out " +
                (dir_ / "t0.svg").string()),
            0);
  const std::string svg = slurp(dir_ / "t0.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(svg.find("class=\"edge\""), std::string::npos);
  EXPECT_EQ(run("render " + csv + " --map " + (data_dir() / "maps" / "open20.map").string() + " --out " +
                (dir_ / "last.svg").string()),
            0);
  EXPECT_NE(slurp(dir_ / "last.svg").find("class=\"edge\""), std::string::npos);
  EXPECT_NE(run("render " + csv + " --tick 999999 --scenario " + bundled("open_field").string()), 0);
  EXPECT_NE(stderr_text().find("not in the trajectory"), std::string::npos);
  std::ofstream(dir_ / "bad.csv") << "tick,robot,x,y\n0,0,1,1\n";
  EXPECT_NE(run("render " + (dir_ / "bad.csv").string() + " --scenario " + bundled("open_field").string()), 0);
  EXPECT_NE(stderr_text().find("column mismatch"), std::string::npos);
}
