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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdsp/solver.hpp"

namespace mdsp {

/// q + sum_k #{distinct nonzero values in column k}; exact equality on the
/// snapped coefficients. Coefficients sitting on frozen directions are not
/// counted.
std::size_t degrees_of_freedom(const FitResult& fit);

/// Unweighted ||Y - Yhat||^2.
double residual_sum_of_squares(const FitResult& fit, const LongitudinalDataset& dataset);

/// RSS / (mN - df), or 0 when df >= mN.
double noise_variance(const FitResult& fit, const LongitudinalDataset& dataset);

/// RSS / (mN - df)^2. Throws DegenerateDf when df >= mN.
double gcv(const FitResult& fit, const LongitudinalDataset& dataset);
double gcv_value(double rss, std::size_t n_obs, std::size_t df);

/// max_{i,k} |X_ik' R^{-1} y_i|.
double lambda_max(const LongitudinalDataset& dataset, const CorrelationModel& corr);

/// `points` log-spaced values on [1e-3 lambda_max, lambda_max], ascending.
std::vector<double> default_lambda_grid(const LongitudinalDataset& dataset,
                                        const CorrelationModel& corr, int points = 30);

struct GridFailure {
  double lambda;
  std::string error;
};

struct BicEntry {
  int groups;
  double bic;
  double rss;
};

struct TuningReport {
  std::vector<double> lambda_grid;
  std::vector<double> gcv_values;  // NaN where the grid point failed
  std::vector<std::size_t> df_per_lambda;
  double chosen_lambda = 0.0;
  std::vector<GridFailure> failures;
  // Filled by select_group_numbers: per covariate, B_k -> BIC.
  std::vector<std::vector<BicEntry>> bic_table;
  std::vector<int> chosen_B;
};

struct TuningOutcome {
  TuningReport report;
  FitResult fit;  // fit at the chosen lambda
};

/// MDSP at each lambda of an ascending grid, each fit warm-started from the
/// previous solution; returns the GCV minimizer (ties go to the larger
/// lambda). An empty grid selects default_lambda_grid. Throws the last
/// error when every grid point fails.
TuningOutcome select_lambda(const LongitudinalDataset& dataset, const ModelConfig& config,
                            std::vector<double> grid = {});

/// Modified BIC for B_k groups on covariate k (0-based), with the other
/// covariates held at their individual-wise estimates. B_k = 1 means the
/// all-zero column.
double modified_bic(const LongitudinalDataset& dataset, std::size_t k, int groups,
                    const ModelConfig& config = {}, double* rss_out = nullptr);

/// b_{N,m} = 2 log(log(Np + q)).
double bic_penalty_factor(std::size_t n, std::size_t p, std::size_t q);

/// Sweeps B_k over [min_groups, max_groups] per covariate; chosen_B is the
/// argmin (ties go to the smaller B_k).
TuningReport select_group_numbers(const LongitudinalDataset& dataset,
                                  const ModelConfig& config = {}, int min_groups = 1,
                                  int max_groups = 5);

}  // namespace mdsp
