/*
 * Copyright 2026 The mdsp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mdsp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult cli(const std::string& args) const {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(MDSP_CLI_PATH) + " " + args + " >" +
                            (dir_ / "stdout.txt").string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read(err)};
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Noiseless two-group panel; with `noise` the responses get N(0, 0.25).
  fs::path write_panel(const std::string& name, std::size_t n, std::size_t m, double noise = 0.0,
                       std::size_t p = 1) const {
    std::mt19937 rng(17);
    std::normal_distribution<double> g;
    std::ostringstream os;
    os.precision(17);
    os << "id,time,y";
    for (std::size_t k = 1; k <= p; ++k) os << ",x" << k;
    os << ",z1,z2\n";
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 1; t <= m; ++t) {
        std::vector<double> x(p);
        for (auto& v : x) v = g(rng);
        const double z2 = g(rng);
        double y = 1.0 + z2 + noise * 0.5 * g(rng);
        for (double v : x) y += (i < n / 2 ? 2.0 : 0.0) * v;
        os << "s" << i << ',' << t << ',' << y;
        for (double v : x) os << ',' << v;
        os << ",1," << z2 << '\n';
      }
    const auto path = dir_ / name;
    std::ofstream(path) << os.str();
    return path;
  }

  fs::path dir_;
};

TEST_F(Cli, FitIsDeterministic) {
  const auto data = write_panel("d.csv", 20, 8, 1.0);
  ASSERT_EQ(cli("fit --data " + data.string() + " --lambda 0.5 --seed 3 --out " + (dir_ / "a").string()).status, 0);
  ASSERT_EQ(cli("fit --data " + data.string() + " --lambda 0.5 --seed 3 --threads 1 --out " +
                (dir_ / "b").string()).status, 0);
  const auto a = read(dir_ / "a" / "coefficients.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read(dir_ / "b" / "coefficients.csv"));
  const auto fit = nlohmann::json::parse(read(dir_ / "a" / "fit.json"));
  EXPECT_EQ(fit["schema_version"], 1);
  EXPECT_EQ(fit["lambda"], 0.5);
}

TEST_F(Cli, OmittedLambdaIsTunedAndLogged) {
  const auto data = write_panel("d.csv", 20, 8, 1.0);
  ASSERT_EQ(cli("fit --data " + data.string() + " --out " + dir_.string()).status, 0);
  std::ifstream log(dir_ / "run.jsonl");
  std::string line;
  bool tuned = false, iteration = false;
  while (std::getline(log, line)) {
    const auto e = nlohmann::json::parse(line);
    EXPECT_TRUE(e.contains("timestamp"));
    EXPECT_EQ(e["schema_version"], 1);
    if (e["event"] == "tuned") tuned = e["lambda"].get<double>() > 0.0;
    if (e["event"] == "iteration") iteration = e.contains("objective") && e.contains("primal_residual");
  }
  EXPECT_TRUE(tuned);
  EXPECT_TRUE(iteration);
  EXPECT_TRUE(fs::exists(dir_ / "tuning.json"));
}

TEST_F(Cli, CorruptCsvNamesRow) {
  const auto path = dir_ / "bad.csv";
  std::ofstream(path) << "id,time,y,x1\na,1,1,1\na,2,zz,1\n";
  const auto r = cli("fit --data " + path.string() + " --lambda 1 --out " + dir_.string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;
  const auto e = nlohmann::json::parse(read(dir_ / "error.json"));
  EXPECT_EQ(e["error"], "InvalidArgument");
}

TEST_F(Cli, ConfigFileLosesToFlags) {
  const auto data = write_panel("d.csv", 20, 8, 1.0);
  std::ofstream(dir_ / "c.json") << R"({"lambda": 3.0, "correlation": "ar1"})";
  ASSERT_EQ(cli("fit --data " + data.string() + " --config " + (dir_ / "c.json").string() +
                " --lambda 0.25 --out " + dir_.string()).status, 0);
  const auto fit = nlohmann::json::parse(read(dir_ / "fit.json"));
  EXPECT_EQ(fit["lambda"], 0.25);
  EXPECT_EQ(fit["correlation"], "ar1");
}

TEST_F(Cli, BadGroupsFlag) {
  const auto data = write_panel("d.csv", 10, 6);
  EXPECT_EQ(cli("fit --data " + data.string() + " --groups 0=2 --out " + dir_.string()).status, 1);
  EXPECT_EQ(cli("fit --data " + data.string() + " --groups two --out " + dir_.string()).status, 1);
  EXPECT_EQ(cli("fit --data " + data.string() + " --corr spherical --out " + dir_.string()).status, 1);
}

TEST_F(Cli, NonConvergenceExitsTwoWithOutput) {
  const auto data = write_panel("d.csv", 20, 8, 1.0);
  std::ofstream(dir_ / "c.json") << R"({"max_iterations": 1, "restarts": 0, "polish": false})";
  const auto r = cli("fit --data " + data.string() + " --config " + (dir_ / "c.json").string() +
                     " --lambda 0.5 --kappa 0.01 --out " + dir_.string());
  EXPECT_EQ(r.status, 2) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "coefficients.csv"));
}

TEST_F(Cli, TuneWritesGrid) {
  const auto data = write_panel("d.csv", 20, 8, 1.0);
  ASSERT_EQ(cli("tune --data " + data.string() + " --out " + dir_.string()).status, 0);
  const auto csv = read(dir_ / "tuning.csv");
  EXPECT_EQ(csv.rfind("lambda,df,gcv\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
}

TEST_F(Cli, SelectGroups) {
  const auto data = write_panel("d.csv", 30, 8, 1.0);
  ASSERT_EQ(cli("select-groups --data " + data.string() + " --min 1 --max 3 --out " + dir_.string()).status, 0);
  const auto j = nlohmann::json::parse(read(dir_ / "groups.json"));
  EXPECT_EQ(j["chosen_B"][0], 2);
}

TEST_F(Cli, PredictNew) {
  const auto train = write_panel("train.csv", 20, 10, 0.0, 2);
  ASSERT_EQ(cli("fit --data " + train.string() + " --lambda 0.5 --out " + (dir_ / "t").string()).status, 0);
  const auto model = (dir_ / "t" / "fit.json").string();

  // Training individuals again, noiseless: the same selection.
  ASSERT_EQ(cli("predict-new --data " + train.string() + " --model " + model + " --out " +
                (dir_ / "p").string()).status, 0);
  std::ifstream pred(dir_ / "p" / "predictions.csv");
  std::ifstream coef(dir_ / "t" / "coefficients.csv");
  std::string pl, cl;
  std::getline(pred, pl);
  std::getline(coef, cl);
  std::size_t rows = 0;
  while (std::getline(pred, pl) && std::getline(coef, cl)) {
    const bool trained_nonzero = cl.substr(cl.rfind(',') + 1) != "0";
    EXPECT_EQ(pl.back() == '1', trained_nonzero) << pl << " vs " << cl;
    ++rows;
  }
  EXPECT_EQ(rows, 40u);

  // lambda* = 0 gives per-individual least squares.
  const auto noisy = write_panel("new.csv", 3, 8, 1.0, 2);
  ASSERT_EQ(cli("predict-new --data " + noisy.string() + " --model " + model +
                " --lambda-star 0 --out " + (dir_ / "o").string()).status, 0);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "predictions.csv"));

  std::ofstream(dir_ / "empty.csv") << "";
  EXPECT_EQ(cli("predict-new --data " + (dir_ / "empty.csv").string() + " --model " + model +
                " --out " + dir_.string()).status, 1);
  const auto one = write_panel("one.csv", 4, 8, 1.0, 1);
  const auto r = cli("predict-new --data " + one.string() + " --model " + model + " --out " + dir_.string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("ShapeMismatch"), std::string::npos);
}

TEST_F(Cli, BenchSingleReplication) {
  std::ofstream(dir_ / "s.json")
      << R"({"scenario":"single_covariate","N":10,"m":6,"methods":["mdsp","sub"]})";
  ASSERT_EQ(cli("bench --spec " + (dir_ / "s.json").string() + " --reps 1 --out " + dir_.string()).status, 0);
  std::ifstream in(dir_ / "metrics.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_NE(header.find("rmse_sd"), std::string::npos);
  EXPECT_NE(row.find(",mdsp,10,6,0,1,0,true,"), std::string::npos) << row;
  // rmse_sd sits right after rmse_mean and is empty.
  const auto pos = row.find(",true,") + 6;
  const auto mean_end = row.find(',', pos);
  EXPECT_EQ(row[mean_end + 1], ',');
}

TEST_F(Cli, BenchInvalidScenario) {
  std::ofstream(dir_ / "s.json") << R"({"scenario":"table9"})";
  const auto r = cli("bench --spec " + (dir_ / "s.json").string() + " --out " + dir_.string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("three_group_misspec"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(cli("").status, 0);
  EXPECT_NE(cli("fit").status, 0);
  EXPECT_EQ(cli("fit --data " + (dir_ / "missing.csv").string() + " --out " + dir_.string()).status, 1);
}

}  // namespace
