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
#include "mdsp/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mdsp/parallel.hpp"

namespace mdsp {

std::size_t degrees_of_freedom(const FitResult& fit) {
  std::size_t df = static_cast<std::size_t>(fit.alpha.size());
  for (Eigen::Index k = 0; k < fit.beta.cols(); ++k) {
    std::set<double> values;
    for (Eigen::Index i = 0; i < fit.beta.rows(); ++i) {
      const double v = fit.beta(i, k);
      if (v == 0.0) continue;
      if (fit.gamma_frozen && static_cast<std::size_t>(k) < fit.gamma.size()) {
        const auto& g = fit.gamma[k];
        if (std::find(g.data(), g.data() + g.size(), v) != g.data() + g.size()) continue;
      }
      values.insert(v);
    }
    df += values.size();
  }
  return df;
}

double noise_variance(const FitResult& fit, const LongitudinalDataset& d) {
  const std::size_t n = d.n_observations();
  if (fit.df >= n) return 0.0;
  return residual_sum_of_squares(fit, d) / static_cast<double>(n - fit.df);
}

double residual_sum_of_squares(const FitResult& fit, const LongitudinalDataset& d) {
  if (static_cast<std::size_t>(fit.beta.rows()) != d.n_individuals() ||
      static_cast<std::size_t>(fit.beta.cols()) != d.p() ||
      static_cast<std::size_t>(fit.alpha.size()) != d.q())
    throw Error(ErrorCode::ShapeMismatch, "fit does not match dataset dimensions");
  double rss = 0.0;
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    Eigen::VectorXd r = d.y(i) - d.x(i) * fit.beta.row(static_cast<Eigen::Index>(i)).transpose();
    if (d.q() > 0) r -= d.z(i) * fit.alpha;
    rss += r.squaredNorm();
  }
  return rss;
}

double gcv_value(double rss, std::size_t n_obs, std::size_t df) {
  if (df >= n_obs)
    throw Error(ErrorCode::DegenerateDf,
                "df=" + std::to_string(df) + " >= mN=" + std::to_string(n_obs));
  const double denom = static_cast<double>(n_obs - df);
  return rss / (denom * denom);
}

double gcv(const FitResult& fit, const LongitudinalDataset& d) {
  return gcv_value(residual_sum_of_squares(fit, d), d.n_observations(), fit.df);
}

double lambda_max(const LongitudinalDataset& d, const CorrelationModel& corr) {
  double lmax = 0.0;
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    const Eigen::VectorXd wy = corr.inverse_apply(d.y(i));
    lmax = std::max(lmax, (d.x(i).transpose() * wy).cwiseAbs().maxCoeff());
  }
  return lmax;
}

std::vector<double> default_lambda_grid(const LongitudinalDataset& d,
                                        const CorrelationModel& corr, int points) {
  if (points < 1) throw Error(ErrorCode::InvalidArgument, "grid needs at least one point");
  const double top = lambda_max(d, corr);
  if (points == 1) return {top};
  std::vector<double> grid(points);
  for (int j = 0; j < points; ++j)
    grid[j] = top * std::pow(10.0, -3.0 + 3.0 * j / (points - 1));
  grid.back() = top;
  return grid;
}

TuningOutcome select_lambda(const LongitudinalDataset& d, const ModelConfig& config,
                            std::vector<double> grid) {
  config.validate(d.p());
  MdspSolver solver(d, config);
  if (grid.empty()) grid = default_lambda_grid(d, solver.correlation());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!(grid[j] >= 0.0) || !std::isfinite(grid[j]))
      throw Error(ErrorCode::InvalidArgument, "lambda grid values must be finite and >= 0");
    if (j > 0 && grid[j] < grid[j - 1])
      throw Error(ErrorCode::InvalidArgument, "lambda grid must be sorted ascending");
  }

  TuningOutcome out;
  out.report.lambda_grid = grid;
  out.report.gcv_values.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  out.report.df_per_lambda.assign(grid.size(), 0);
  std::optional<CoefficientState> previous;
  std::optional<FitResult> best;
  double best_score = std::numeric_limits<double>::infinity();
  std::string last_error;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    try {
      FitResult fit = solver.fit(grid[j], previous);
      previous = fit.state;
      out.report.df_per_lambda[j] = fit.df;
      const double score = gcv(fit, d);
      out.report.gcv_values[j] = score;
      // Ascending grid: ties move to the larger lambda.
      if (!best || score <= best_score) {
        best_score = score;
        best = std::move(fit);
      }
    } catch (const Error& e) {
      last_error = e.what();
      out.report.failures.push_back({grid[j], e.what()});
    }
  }
  if (!best)
    throw Error(ErrorCode::DegenerateDf, "every lambda grid point failed; last error: " + last_error);
  out.report.chosen_lambda = best->lambda;
  out.fit = std::move(*best);
  return out;
}

double bic_penalty_factor(std::size_t n, std::size_t p, std::size_t q) {
  const double p_theta = static_cast<double>(n * p + q);
  if (!(p_theta > std::exp(1.0)))
    throw Error(ErrorCode::InvalidArgument, "log(log(Np+q)) needs Np+q > e");
  return 2.0 * std::log(std::log(p_theta));
}

namespace {

// Partial-response dataset for covariate k: the other individualized
// effects are removed at their individual-wise estimates.
LongitudinalDataset partial_dataset(const LongitudinalDataset& d, std::size_t k,
                                    const Eigen::MatrixXd& beta_iw) {
  const std::size_t n = d.n_individuals(), m = d.measurements(), p = d.p(), q = d.q();
  std::vector<double> y(n * m), x(n * m), z = d.z_data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = d.x(i);
    Eigen::VectorXd yi = d.y(i);
    for (std::size_t j = 0; j < p; ++j)
      if (j != k) yi -= xi.col(static_cast<Eigen::Index>(j)) * beta_iw(i, j);
    for (std::size_t t = 0; t < m; ++t) {
      y[i * m + t] = yi(t);
      x[i * m + t] = xi(t, k);
    }
  }
  return LongitudinalDataset(n, m, 1, q, std::move(y), std::move(x), std::move(z), d.ids());
}

}  // namespace

double modified_bic(const LongitudinalDataset& d, std::size_t k, int groups,
                    const ModelConfig& config, double* rss_out) {
  if (k >= d.p()) throw Error(ErrorCode::InvalidArgument, "covariate index out of range");
  if (groups < 1) throw Error(ErrorCode::InvalidArgument, "B_k must be >= 1");
  const CorrelationModel corr = resolve_correlation(d, config);
  const FitResult iw = fit_individualwise(d, corr);
  const LongitudinalDataset part = partial_dataset(d, k, iw.beta);

  FitResult fit;
  if (groups == 1) {
    SubgroupAssignment zero;
    zero.labels.assign(1, std::vector<int>(d.n_individuals(), 0));
    fit = fit_oracle(part, zero, corr);
  } else {
    ModelConfig cfg = config;
    cfg.groups_per_covariate = {groups};
    cfg.sign_constraints.clear();
    if (k < config.sign_constraints.size()) cfg.sign_constraints = {config.sign_constraints[k]};
    cfg.fixed_rho = corr.rho();
    MdspSolver solver(part, cfg, corr);
    // At the top of the grid every coefficient snaps onto a direction, so
    // the fit is a B_k-level partition of the individuals.
    fit = solver.fit(std::max(lambda_max(part, corr), 1e-12));
  }
  const double rss = residual_sum_of_squares(fit, part);
  if (rss_out) *rss_out = rss;
  const double mn = static_cast<double>(d.n_observations());
  const double b = bic_penalty_factor(d.n_individuals(), d.p(), d.q());
  return std::log(rss / mn) + b * std::log(mn) / mn * (groups + static_cast<double>(d.q()) - 1.0);
}

TuningReport select_group_numbers(const LongitudinalDataset& d, const ModelConfig& config,
                                  int min_groups, int max_groups) {
  if (min_groups < 1 || max_groups < min_groups)
    throw Error(ErrorCode::InvalidArgument, "need 1 <= min_groups <= max_groups");
  const std::size_t p = d.p();
  const auto span = static_cast<std::size_t>(max_groups - min_groups + 1);
  std::vector<BicEntry> entries(p * span);
  parallel_for(p * span, [&](std::size_t j) {
    const std::size_t k = j / span;
    const int b = min_groups + static_cast<int>(j % span);
    double rss = 0.0;
    const double bic = modified_bic(d, k, b, config, &rss);
    entries[j] = {b, bic, rss};
  });
  TuningReport report;
  report.bic_table.resize(p);
  report.chosen_B.resize(p);
  for (std::size_t k = 0; k < p; ++k) {
    report.bic_table[k].assign(entries.begin() + k * span, entries.begin() + (k + 1) * span);
    const auto best = std::min_element(
        report.bic_table[k].begin(), report.bic_table[k].end(),
        [](const BicEntry& a, const BicEntry& b) { return a.bic < b.bic; });
    report.chosen_B[k] = best->groups;
  }
  return report;
}

}  // namespace mdsp
