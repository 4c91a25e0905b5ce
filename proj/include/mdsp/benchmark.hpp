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
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdsp/dataset.hpp"
#include "mdsp/solver.hpp"

namespace mdsp {

enum class Scenario {
  single_covariate,          // y = a0 + a1 z1 + a2 z2 + b_i x, b half gamma / half 0
  two_covariate_correlated,  // two covariates with complementary halves
  homogeneous_misspec,       // b_i = gamma for everyone
  three_group_misspec,       // thirds at gamma_1, 0, gamma_2
  semi_new,                  // training on the two-covariate design, then new individuals
};

std::string to_string(Scenario s);
/// Throws InvalidSpec listing the valid names.
Scenario parse_scenario(const std::string& name);
const std::vector<std::string>& scenario_names();

struct ExperimentSpec {
  std::string name;
  Scenario scenario = Scenario::single_covariate;
  std::size_t n = 40;
  std::size_t m = 10;
  std::vector<double> gamma_truth{2.0};
  double sigma = 1.0;
  CorrelationKind error_correlation = CorrelationKind::independence;
  double rho = 0.0;
  int n_replications = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> methods{"mdsp", "sub", "homo", "lasso", "oracle"};
  // Groups assumed by the penalized fit for every covariate.
  int fit_groups = 2;
  // Semi-new sweep.
  std::vector<std::size_t> m_star;
  std::size_t n_star = 100;
  std::size_t train_n = 100;
  std::size_t train_m = 20;

  /// Throws InvalidSpec.
  void validate() const;
  std::size_t p() const;
};

ExperimentSpec parse_experiment_spec(const std::string& json_text);
std::string experiment_spec_to_json(const ExperimentSpec& spec);
const std::vector<std::string>& method_names();

struct SimulatedData {
  LongitudinalDataset dataset;
  Eigen::MatrixXd beta;  // N x p truth
  Eigen::VectorXd alpha;
  SubgroupAssignment assignment;
};

/// Deterministic in (spec.seed, replication). Covariates are N(0,1), Z holds
/// an intercept column, errors are N(0, sigma^2 R(rho)).
SimulatedData generate(const ExperimentSpec& spec, std::size_t replication);

/// sqrt(sum (bhat - b)^2 / (N p)).
double rmse(const Eigen::MatrixXd& beta_hat, const Eigen::MatrixXd& beta_truth);

struct SelectionMetrics {
  double cvsr = 0.0;
  std::optional<double> sensitivity;  // absent when the truth has no nonzero cell
  std::optional<double> specificity;  // absent when the truth has no zero cell
};

SelectionMetrics selection_metrics(const Eigen::MatrixXd& beta_hat,
                                   const Eigen::MatrixXd& beta_truth);

/// One (replication, method) outcome.
struct MethodRun {
  std::size_t replication = 0;
  std::size_t m_star = 0;  // semi-new sweeps only
  std::string method;
  bool ok = false;
  std::string error;
  double rmse = 0.0;
  SelectionMetrics selection;
  std::vector<double> cvsr_by_covariate;
  std::vector<double> gamma_hat;  // first direction per covariate
  double lambda = 0.0;
  bool converged = true;
  int admm_runs = 0;
  int admm_converged = 0;
  int descent_violations = 0;
};

struct Summary {
  double mean = 0.0;
  std::optional<double> sd;  // absent with fewer than two values
  std::size_t count = 0;
};

struct MetricsRow {
  std::string scenario;
  std::string method;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t m_star = 0;
  std::size_t replications = 0;
  std::size_t failures = 0;
  bool valid = true;  // false when more than 5% of replications failed
  Summary rmse, cvsr, sensitivity, specificity;
  std::vector<Summary> cvsr_by_covariate;
  std::vector<Summary> gamma_hat;
  int admm_runs = 0;
  int admm_converged = 0;
  int descent_violations = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<MethodRun> runs;

  std::string to_csv() const;
  std::string to_text() const;
  std::string raw_csv() const;
  const MetricsRow* find(const std::string& method, std::size_t m_star = 0) const;
};

Summary summarize(const std::vector<double>& values);

/// Replications run in parallel; every penalized method is tuned per
/// replication by GCV on the default grid.
MetricsTable run_experiment(const ExperimentSpec& spec);

/// Trains on spec.train_n x spec.train_m, then fits spec.n_star new
/// individuals per m* with the trained directions frozen.
MetricsTable run_semi_new(const ExperimentSpec& spec);

/// Dispatches on spec.scenario.
MetricsTable run(const ExperimentSpec& spec);

/// Scaled reproductions: "1", "2", "3", "semi-new".
std::vector<ExperimentSpec> paper_preset(const std::string& table, int replications,
                                         std::uint64_t seed);

}  // namespace mdsp
