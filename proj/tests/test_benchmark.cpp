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
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "mdsp/benchmark.hpp"
#include "mdsp/parallel.hpp"

namespace mdsp {
namespace {

Eigen::VectorXd noise_of(const SimulatedData& s) {
  const auto& d = s.dataset;
  Eigen::VectorXd e(static_cast<Eigen::Index>(d.n_observations()));
  for (std::size_t i = 0; i < d.n_individuals(); ++i)
    e.segment(static_cast<Eigen::Index>(i * d.measurements()),
              static_cast<Eigen::Index>(d.measurements())) =
        d.y(i) - d.x(i) * s.beta.row(static_cast<Eigen::Index>(i)).transpose() - d.z(i) * s.alpha;
  return e;
}

std::vector<std::string> csv_row(const std::string& csv, std::size_t row) {
  std::istringstream in(csv);
  std::string line;
  for (std::size_t r = 0; r <= row; ++r) std::getline(in, line);
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

TEST(Generate, DeterministicPerReplication) {
  ExperimentSpec s;
  s.seed = 3;
  EXPECT_EQ(generate(s, 4).dataset, generate(s, 4).dataset);
  EXPECT_NE(generate(s, 4).dataset.y_data(), generate(s, 5).dataset.y_data());
}

TEST(Generate, TinySigmaGivesNoiselessMean) {
  ExperimentSpec s;
  s.sigma = 1e-12;
  EXPECT_LT(noise_of(generate(s, 0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Generate, TruthLayout) {
  ExperimentSpec s;
  s.n = 40;
  s.gamma_truth = {2.0};
  const auto g = generate(s, 0);
  EXPECT_EQ((g.beta.array() == 2.0).count(), 20);
  EXPECT_EQ((g.beta.array() == 0.0).count(), 20);
  EXPECT_EQ(g.alpha, Eigen::Vector3d(1, 1, 1));
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(g.dataset.z(i)(0, 0), 1.0);
  s.scenario = Scenario::three_group_misspec;
  s.n = 60;
  s.gamma_truth = {-3.0, 1.0};
  const auto t = generate(s, 0);
  EXPECT_EQ((t.beta.array() == -3.0).count(), 20);
  EXPECT_EQ((t.beta.array() == 1.0).count(), 20);
  s.scenario = Scenario::homogeneous_misspec;
  s.gamma_truth = {2.0};
  EXPECT_TRUE((generate(s, 0).beta.array() == 2.0).all());
}

TEST(Generate, Ar1NoiseHasLagOneCorrelation) {
  ExperimentSpec s;
  s.n = 500;
  s.m = 20;
  s.error_correlation = CorrelationKind::ar1;
  s.rho = 0.5;
  const Eigen::VectorXd e = noise_of(generate(s, 0));
  double lag = 0, var = 0;
  for (std::size_t i = 0; i < 500; ++i)
    for (std::size_t t = 0; t < 20; ++t) {
      const double v = e(static_cast<Eigen::Index>(i * 20 + t));
      var += v * v;
      if (t + 1 < 20) lag += v * e(static_cast<Eigen::Index>(i * 20 + t + 1));
    }
  EXPECT_NEAR((lag / (500.0 * 19.0)) / (var / 10000.0), 0.5, 0.03);
}

TEST(Generate, ExchangeableNoiseCovariance) {
  ExperimentSpec s;
  s.n = 2000;
  s.m = 4;
  s.error_correlation = CorrelationKind::exchangeable;
  s.rho = 0.5;
  const Eigen::VectorXd e = noise_of(generate(s, 1));
  const Eigen::MatrixXd em = e.reshaped(4, 2000).transpose();
  const Eigen::MatrixXd cov = em.transpose() * em / 2000.0;
  EXPECT_NEAR(cov(0, 0), 1.0, 0.08);
  EXPECT_NEAR(cov(0, 3), 0.5, 0.08);
}

TEST(Rmse, Examples) {
  Eigen::MatrixXd b(2, 1);
  b << 1, 0;
  EXPECT_EQ(rmse(b, b), 0.0);
  EXPECT_DOUBLE_EQ(rmse(b, Eigen::MatrixXd::Zero(2, 1)), 1.0 / std::sqrt(2.0));
  Eigen::MatrixXd truth(4, 1), homo = Eigen::MatrixXd::Ones(4, 1);
  truth << 2, 2, 0, 0;
  EXPECT_DOUBLE_EQ(rmse(homo, truth), 1.0);
  EXPECT_THROW(rmse(b, Eigen::MatrixXd::Zero(3, 1)), Error);
}

TEST(SelectionMetrics, Examples) {
  Eigen::MatrixXd truth(4, 1);
  truth << 1, 1, 0, 0;
  const auto same = selection_metrics(truth, truth);
  EXPECT_EQ(same.cvsr, 1.0);
  EXPECT_EQ(*same.sensitivity, 1.0);
  EXPECT_EQ(*same.specificity, 1.0);
  const auto zero = selection_metrics(Eigen::MatrixXd::Zero(4, 1), truth);
  EXPECT_EQ(zero.cvsr, 0.5);
  EXPECT_EQ(*zero.sensitivity, 0.0);
  EXPECT_EQ(*zero.specificity, 1.0);
  EXPECT_FALSE(selection_metrics(truth, Eigen::MatrixXd::Ones(4, 1)).specificity.has_value());
}

TEST(Summarize, SdAbsentForOneValue) {
  EXPECT_FALSE(summarize({1.0}).sd.has_value());
  const auto s = summarize({1.0, 3.0});
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_NEAR(*s.sd, std::sqrt(2.0), 1e-15);
}

TEST(Spec, ParseAndRoundTrip) {
  const auto s = parse_experiment_spec(
      R"({"scenario":"single_covariate","N":20,"m":5,"gamma_truth":[1.5],
          "error_correlation":{"kind":"ar1","rho":0.3},"n_replications":2,"seed":4,
          "methods":["mdsp","sub"]})");
  EXPECT_EQ(s.n, 20u);
  EXPECT_EQ(s.error_correlation, CorrelationKind::ar1);
  EXPECT_DOUBLE_EQ(s.rho, 0.3);
  const auto back = parse_experiment_spec(experiment_spec_to_json(s));
  EXPECT_EQ(back.n, s.n);
  EXPECT_EQ(back.methods, s.methods);
  EXPECT_EQ(back.rho, s.rho);
  EXPECT_EQ(back.seed, s.seed);
}

TEST(Spec, InvalidScenarioListsNames) {
  try {
    parse_scenario("table9");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    for (const auto& name : scenario_names())
      EXPECT_NE(std::string(e.what()).find(name), std::string::npos);
  }
  EXPECT_THROW(parse_experiment_spec(R"({"methods":["mdsp","nope"]})"), Error);
  EXPECT_THROW(parse_experiment_spec(R"({"N":0})"), Error);
}

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.n = 20;
  s.m = 8;
  s.gamma_truth = {2.0};
  s.n_replications = 3;
  s.seed = 11;
  return s;
}

TEST(RunExperiment, RowsPerMethodAndOrdering) {
  const auto t = run_experiment(small_spec());
  ASSERT_EQ(t.rows.size(), 5u);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.replications, 3u) << r.method;
    EXPECT_TRUE(r.valid);
  }
  EXPECT_LT(t.find("oracle")->rmse.mean, t.find("sub")->rmse.mean);
  EXPECT_LT(t.find("mdsp")->rmse.mean, t.find("homo")->rmse.mean);
  EXPECT_EQ(t.runs.size(), 15u);
}

TEST(RunExperiment, IndependentOfThreadCount) {
  set_thread_count(1);
  const auto a = run_experiment(small_spec());
  set_thread_count(4);
  const auto b = run_experiment(small_spec());
  set_thread_count(0);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.raw_csv(), b.raw_csv());
}

TEST(RunExperiment, SingleReplicationHasNoSd) {
  auto s = small_spec();
  s.n_replications = 1;
  s.methods = {"mdsp"};
  const auto csv = run_experiment(s).to_csv();
  const auto header = csv_row(csv, 0);
  const auto row = csv_row(csv, 1);
  const auto col = std::find(header.begin(), header.end(), "rmse_sd") - header.begin();
  ASSERT_LT(static_cast<std::size_t>(col), row.size());
  EXPECT_EQ(row[col], "");
}

TEST(RunSemiNew, NoiselessWithTruthSelectsPerfectly) {
  ExperimentSpec s;
  s.scenario = Scenario::semi_new;
  s.gamma_truth = {1.0, -2.0};
  s.sigma = 1e-9;
  s.n_replications = 1;
  s.train_n = 40;
  s.train_m = 10;
  s.m_star = {6, 10};
  s.n_star = 20;
  s.methods = {"mdsp"};
  const auto t = run_semi_new(s);
  for (std::size_t ms : {6u, 10u}) {
    const auto* r = t.find("mdsp", ms);
    ASSERT_NE(r, nullptr);
    EXPECT_DOUBLE_EQ(r->cvsr.mean, 1.0) << "m*=" << ms;
  }
}

TEST(Presets, Shapes) {
  EXPECT_EQ(paper_preset("1", 2, 0).size(), 8u);
  for (const auto& s : paper_preset("2", 2, 0)) EXPECT_NE(s.error_correlation, CorrelationKind::independence);
  EXPECT_EQ(paper_preset("semi-new", 2, 0).front().scenario, Scenario::semi_new);
  EXPECT_THROW(paper_preset("9", 2, 0), Error);
}

}  // namespace
}  // namespace mdsp
