#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cspamp/experiment.h"
#include "cspamp/predicate.h"

using namespace cspamp;
namespace fs = std::filesystem;

namespace {

int exit_code(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + CSPAMP_BIN + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string output_of(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "cspamp_cli_stdout.txt";
  const std::string cmd = std::string(CSPAMP_BIN) + " " + args + " >" + out.string() + " 2>/dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0) << cmd;
  std::ifstream in(out);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cspamp_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json load(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const std::string kSmall = "--n 600 --d 8 --delta 0.1 --pieces 1 --sde-paths 2000";

}  // namespace

TEST(Cli, HelpForEveryCommand) {
  EXPECT_EQ(exit_code("--help"), 0);
  EXPECT_EQ(exit_code("--version"), 0);
  for (const char* sub : {"predicate", "gen", "parisi", "run", "diag", "sweep", "pipeline"}) {
    EXPECT_EQ(exit_code(std::string(sub) + " --help"), 0) << sub;
  }
  EXPECT_EQ(exit_code(""), 2);
  EXPECT_EQ(exit_code("frobnicate"), 2);
}

TEST(Cli, BadConfigExitsTwo) {
  EXPECT_EQ(exit_code("pipeline --dry-run --delta 0.7"), 2);
  EXPECT_EQ(exit_code("pipeline --dry-run --d 5"), 2);
  EXPECT_EQ(exit_code("pipeline --dry-run --predicate no_such_predicate"), 2);
  const auto dir = fresh_dir("badcfg");
  std::ofstream(dir / "bad.cfg") << "colour = blue\n";
  EXPECT_EQ(exit_code("--config " + (dir / "bad.cfg").string() + " pipeline --dry-run"), 2);
}

TEST(Cli, LinearPredicateRejected) {
  const auto dir = fresh_dir("linear");
  {
    std::ofstream out(dir / "dictator.txt");
    write_predicate(out, fourier_transform(2, std::vector<std::uint8_t>{1, 1, 0, 0}));
  }
  EXPECT_EQ(exit_code("pipeline --predicate " + (dir / "dictator.txt").string() + " --out-dir " + dir.string()), 3);
}

TEST(Cli, DryRunTouchesNothing) {
  const auto dir = fresh_dir("dry");
  const auto target = dir / "never";
  const auto cache = dir / "cache";
  EXPECT_EQ(exit_code("pipeline --dry-run --out-dir " + target.string() + " --cache " + cache.string()), 0);
  EXPECT_FALSE(fs::exists(target));
  EXPECT_FALSE(fs::exists(cache));
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  const auto dir = fresh_dir("config");
  std::ofstream(dir / "run.cfg") << "# small run\nn = 512\nd = 64\ndelta = 0.1\n";
  const std::string cfg = "--config " + (dir / "run.cfg").string() + " ";
  const auto from_file = output_of(cfg + "pipeline --dry-run");
  EXPECT_NE(from_file.find("n=512 d=64"), std::string::npos) << from_file;
  EXPECT_NE(from_file.find("delta=0.1 L=10"), std::string::npos) << from_file;
  const auto overridden = output_of(cfg + "pipeline --dry-run --n 1024");
  EXPECT_NE(overridden.find("n=1024 d=64"), std::string::npos) << overridden;
}

TEST(Cli, EnvironmentOverrides) {
  const auto dir = fresh_dir("env");
  const auto plan = output_of("pipeline --dry-run");
  EXPECT_NE(plan.find("cache=<none>"), std::string::npos);
  const auto cache = dir / "cache";
  EXPECT_EQ(exit_code("pipeline " + kSmall + " --out-dir " + dir.string(),
                      "CSPAMP_CACHE_DIR=" + cache.string() + " CSPAMP_THREADS=2"),
            0);
  EXPECT_TRUE(fs::exists(cache));
  EXPECT_FALSE(fs::is_empty(cache));
}

TEST(Cli, EmptySweepExitsTwo) {
  EXPECT_EQ(exit_code("sweep --axis d --values \"\""), 2);
  EXPECT_EQ(exit_code("sweep --axis colour --values 1,2"), 2);
}

TEST(Cli, PipelineIsDeterministic) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  ASSERT_EQ(exit_code("pipeline " + kSmall + " --out-dir " + a.string()), 0);
  ASSERT_EQ(exit_code("--threads 3 pipeline " + kSmall + " --out-dir " + b.string()), 0);
  for (const char* file : {"run.result.json", "run.diag.json"}) {
    auto ja = load(a / file), jb = load(b / file);
    for (auto* j : {&ja, &jb}) {
      j->erase("wall_clock_seconds");
      (*j)["config"].erase("out_dir");
      (*j)["config"].erase("threads");
    }
    EXPECT_EQ(ja, jb) << file;
    // Every output carries the version and the resolved configuration.
    EXPECT_EQ(ja.at("version"), version());
    EXPECT_EQ(ja.at("config").at("n"), 600);
    EXPECT_EQ(ja.at("config").at("r"), 2);
  }
}

TEST(Cli, CommandChain) {
  const auto dir = fresh_dir("chain");
  const auto inst = (dir / "inst.txt").string();
  EXPECT_EQ(exit_code("gen --n 500 --d 9 --r 3 --seed 4 --out " + inst), 0);
  ASSERT_TRUE(fs::exists(inst));
  const auto cache = (dir / "cache").string();
  const auto pj = (dir / "parisi.json").string();
  EXPECT_EQ(exit_code("parisi --predicate nae3 --pieces 1 --delta 0.1 --paths 2000 --cache " + cache + " --out " + pj), 0);
  const auto parisi = load(pj);
  EXPECT_GT(parisi.at("alg_estimate").get<double>(), 0.0);
  EXPECT_EQ(parisi.at("version"), version());

  const auto rj = (dir / "result.json").string(), hist = (dir / "hist.bin").string();
  EXPECT_EQ(exit_code("run --instance " + inst + " --predicate nae3 --pieces 1 --delta 0.1 --sde-paths 2000 --parisi-cache " +
                      cache + " --out " + rj + " --histories " + hist),
            0);
  const auto result = load(rj);
  EXPECT_GE(result.at("satisfying_fraction").get<double>(), 0.0);
  EXPECT_LE(result.at("satisfying_fraction").get<double>(), 1.0);

  const auto dj = (dir / "diag.json").string();
  const int code = exit_code("diag --result " + rj + " --histories " + hist + " --out " + dj);
  EXPECT_TRUE(code == 0 || code == 1);
  const auto diag = load(dj);
  EXPECT_TRUE(diag.contains("pass"));
  EXPECT_EQ(diag.at("version"), version());

  // Wrong-degree instance for the predicate's arity.
  EXPECT_EQ(exit_code("run --instance " + inst + " --predicate maxcut2 --delta 0.1 --sde-paths 2000"), 2);
}

TEST(Cli, SweepCsv) {
  const auto dir = fresh_dir("sweep");
  const auto csv = (dir / "sweep.csv").string();
  ASSERT_EQ(exit_code("sweep " + kSmall + " --axis d --values 4,8 --out-dir " + dir.string() + " --csv " + csv), 0);
  std::ifstream in(csv);
  std::string header, row1, row2, extra;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_FALSE(std::getline(in, extra) && !extra.empty());
  EXPECT_EQ(header.rfind("predicate,n,d,delta,fraction,alg_estimate,E_f", 0), 0u) << header;
  EXPECT_EQ(row1.rfind("maxcut2,600,4,", 0), 0u) << row1;
  EXPECT_EQ(row2.rfind("maxcut2,600,8,", 0), 0u) << row2;
}
