#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / ("laic_cli_test_" + std::to_string(::getpid()));

int run(const std::string& args) {
  const std::string cmd = std::string(LAIC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(work);
    fs::create_directories(work);
    ASSERT_EQ(run("synth --num-images 2000 --num-texts 800 --conc-pos 20 --seed 3 --out " + (work / "data").string()), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(work); }

  static std::string inputs() {
    return "--images " + (work / "data/images.laic").string() + " --texts " + (work / "data/texts.laic").string();
  }
};

}  // namespace

TEST_F(Cli, VerifyHealthyBuild) {
  EXPECT_EQ(run("verify --seed 1 --trials 1000"), 0);
}

TEST_F(Cli, RunIsReproducibleAcrossThreadCounts) {
  const auto a = work / "run_a", b = work / "run_b", c = work / "run_c";
  ASSERT_EQ(run("--threads 1 run " + inputs() + " --k 10 --seed 4 --out " + a.string()), 0);
  ASSERT_EQ(run("--threads 3 run " + inputs() + " --k 10 --seed 4 --out " + b.string()), 0);
  ASSERT_EQ(run("--threads 2 run --manifest " + (a / "manifest.json").string() + " --out " + c.string()), 0);
  for (const char* f : {"report.json", "assignments.csv", "scores.csv", "filter.json", "counterparts.laic"}) {
    const auto ref = slurp(a / f);
    EXPECT_FALSE(ref.empty()) << f;
    EXPECT_EQ(ref, slurp(b / f)) << f;
    EXPECT_EQ(ref, slurp(c / f)) << f;
  }
  const auto report = nlohmann::json::parse(slurp(a / "report.json"));
  for (const char* key : {"acc", "nmi", "ari", "baseline_acc", "err_pos", "precision", "recall", "config", "seeds"})
    EXPECT_TRUE(report.contains(key)) << key;
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "run");
  EXPECT_TRUE(manifest.contains("duration_seconds"));
}

TEST_F(Cli, ScoreWritesStageOneArtifacts) {
  const auto out = work / "score";
  ASSERT_EQ(run("score " + inputs() + " --k 10 --out " + out.string()), 0);
  const auto scores = slurp(out / "scores.csv");
  EXPECT_EQ(scores.substr(0, scores.find('\n')), "index,predicted_cluster,gradnorm,msp,cosine");
  EXPECT_TRUE(fs::exists(out / "filter.json"));
  EXPECT_FALSE(fs::exists(out / "assignments.csv"));
}

TEST_F(Cli, AblateKappaWritesTenRows) {
  const auto out = work / "ablate";
  ASSERT_EQ(run("ablate " + inputs() + " --k 10 --param kappa --from 0.002 --to 0.02 --steps 10 --out " + out.string()), 0);
  std::istringstream csv(slurp(out / "ablate_kappa.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "param,acc,nmi,ari");
  int rows = 0;
  double last = 0.0;
  while (std::getline(csv, line)) {
    const double v = std::stod(line.substr(0, line.find(',')));
    EXPECT_GT(v, last);
    last = v;
    ++rows;
  }
  EXPECT_EQ(rows, 10);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("run " + inputs() + " --out " + (work / "x").string()), 1);
  EXPECT_EQ(run("run " + inputs() + " --k 10 --beta 0 --out " + (work / "x").string()), 1);
  EXPECT_EQ(run("run " + inputs() + " --k 10 --gamma 3 --out " + (work / "x").string()), 1);
  EXPECT_EQ(run("run --images /nonexistent.laic --texts /nonexistent.laic --k 10 --out " + (work / "x").string()), 2);
}

TEST_F(Cli, IngestCsv) {
  {
    std::ofstream f(work / "rows.csv");
    f << "3,4\n0,2\n";
  }
  ASSERT_EQ(run("ingest --csv " + (work / "rows.csv").string() + " --dim 2 --normalize --out " + (work / "rows.laic").string()), 0);
  EXPECT_EQ(fs::file_size(work / "rows.laic"), 24u + 16u);
  EXPECT_EQ(run("ingest --csv " + (work / "rows.csv").string() + " --dim 3 --out " + (work / "bad.laic").string()), 2);
}
