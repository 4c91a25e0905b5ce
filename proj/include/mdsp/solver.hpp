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

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdsp/correlation.hpp"
#include "mdsp/dataset.hpp"
#include "mdsp/penalty.hpp"

namespace mdsp {

struct FitResult {
  std::string method = "mdsp";
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;                // N x p, snapped
  std::vector<Eigen::VectorXd> gamma;  // per covariate
  SubgroupAssignment assignment;
  CorrelationKind correlation = CorrelationKind::independence;
  double rho_hat = 0.0;
  double lambda = 0.0;
  double kappa = 1.0;
  int iterations = 0;
  bool converged = true;
  std::vector<double> objective_trace;        // augmented Lagrangian per iteration
  std::vector<double> primal_residual_trace;  // ||beta - nu||_2 per iteration
  std::size_t df = 0;
  double noise_variance = 0.0;  // RSS / (Nm - df); 0 when there are no residual degrees
  double objective = 0.0;  // penalized objective at the reported coefficients
  // Directions given from outside (semi-new fits): coefficients on them
  // carry no degrees of freedom.
  bool gamma_frozen = false;
  bool polished = false;
  // Diagnostics over every ADMM run behind this result (start + restarts).
  int admm_runs = 0;
  int admm_converged = 0;
  int descent_violations = 0;
  // Final ADMM variables, reusable as a warm start.
  CoefficientState state;
};

/// The (alpha, beta) block of the ADMM: minimizes
///   L(alpha, beta) + (kappa/2) ||beta - nu + dual/kappa||^2
/// by eliminating each individual's p-by-p block and solving the q-by-q
/// Schur complement for alpha. Factorizations depend only on the data, the
/// working correlation and kappa, so they are built once per fit.
class PrimalSystem {
 public:
  /// Throws SingularSystem when any block or the Schur complement has a
  /// condition estimate above 1e12.
  PrimalSystem(const LongitudinalDataset& dataset, const CorrelationModel& corr,
               double kappa);

  void solve(const Eigen::MatrixXd& nu, const Eigen::MatrixXd& dual,
             Eigen::VectorXd& alpha, Eigen::MatrixXd& beta) const;

  /// 1/2 sum_i r_i' R^{-1} r_i from the cached Gram blocks.
  double loss(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& beta) const;

  double kappa() const { return kappa_; }
  const LongitudinalDataset& dataset() const { return *data_; }
  const CorrelationModel& correlation() const { return corr_; }

 private:
  const LongitudinalDataset* data_;
  CorrelationModel corr_;
  double kappa_;
  std::size_t n_, p_, q_;
  std::vector<Eigen::MatrixXd> xwx_, xwz_, a_inv_, a_inv_p_;
  std::vector<Eigen::VectorXd> xwy_, zwy_, a_inv_b_;
  std::vector<double> ywy_;
  Eigen::MatrixXd zwz_;
  Eigen::LDLT<Eigen::MatrixXd> schur_;
  Eigen::VectorXd base_rhs_;
};

/// Convenience wrapper that factorizes and solves once.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> update_primal(
    const LongitudinalDataset& dataset, const ModelConfig& config,
    const CorrelationModel& corr, const Eigen::MatrixXd& nu, const Eigen::MatrixXd& dual);

/// Largest eigenvalue of X_i' R^{-1} X_i over individuals: the curvature of
/// the loss in each beta_i, used as the ADMM augmentation when the config
/// leaves kappa unset.
double default_kappa(const LongitudinalDataset& dataset, const CorrelationModel& corr);

/// Working correlation for a fit: independence, the configured fixed rho, or
/// the one-step moment estimate from an independence individual-wise pre-fit.
CorrelationModel resolve_correlation(const LongitudinalDataset& dataset,
                                     const ModelConfig& config);

/// Individual-wise start: beta0 = nu0 = unpenalized estimator, dual = 0,
/// gamma0 from update_gamma on each beta0 column.
CoefficientState warm_start(const LongitudinalDataset& dataset, const CorrelationModel& corr,
                            const ModelConfig& config = {});

/// L(alpha, beta) + lambda * sum_{i,k} min_d |beta_ik - d|.
double penalized_objective(const LongitudinalDataset& dataset, const CorrelationModel& corr,
                           const Eigen::VectorXd& alpha, const Eigen::MatrixXd& beta,
                           const std::vector<Eigen::VectorXd>& gamma, double lambda);

/// Reads labels off snapped coefficients.
SubgroupAssignment assign_groups(const Eigen::MatrixXd& beta,
                                 const std::vector<Eigen::VectorXd>& gamma);

/// One MDSP problem (dataset, working correlation, kappa, constraints) with
/// its factorization and warm start cached, fitted at any lambda.
class MdspSolver {
 public:
  MdspSolver(const LongitudinalDataset& dataset, const ModelConfig& config);
  MdspSolver(const LongitudinalDataset& dataset, const ModelConfig& config,
             const CorrelationModel& corr);

  /// Best of: `init` (when given), the warm start and config.restarts random
  /// restarts, by final penalized objective.
  FitResult fit(double lambda, const std::optional<CoefficientState>& init = std::nullopt) const;

  /// A single ADMM run from `start`, with snapping and optional polish.
  FitResult run(double lambda, CoefficientState start) const;

  const CorrelationModel& correlation() const { return corr_; }
  const CoefficientState& warm() const { return warm_; }
  double kappa() const { return kappa_; }

 private:
  const LongitudinalDataset* data_;
  ModelConfig config_;
  CorrelationModel corr_;
  double kappa_;
  PrimalSystem system_;
  CoefficientState warm_;
};

/// ADMM fit of the MDSP objective at config.lambda.
FitResult fit_mdsp(const LongitudinalDataset& dataset, const ModelConfig& config,
                   const std::optional<CoefficientState>& init = std::nullopt);

/// Weighted least squares with the subgroup structure known.
FitResult fit_oracle(const LongitudinalDataset& dataset, const SubgroupAssignment& assignment,
                     const CorrelationModel& corr);

/// Unpenalized joint fit: every beta_i free, alpha shared.
FitResult fit_individualwise(const LongitudinalDataset& dataset, const CorrelationModel& corr);

/// Single (p+q)-dimensional weighted least squares; beta_i identical.
FitResult fit_homogeneous(const LongitudinalDataset& dataset, const CorrelationModel& corr);

struct LassoPath {
  std::vector<double> lambdas;
  std::vector<double> gcv;
  std::vector<std::size_t> df;
  double chosen_lambda = 0.0;
};

/// L1 on every beta_ik with alpha unpenalized, independence loss, solved by
/// coordinate descent and tuned by GCV (df = q + nonzero count). An empty
/// grid selects 30 log-spaced points below the all-zero threshold.
FitResult fit_lasso_baseline(const LongitudinalDataset& dataset,
                             std::vector<double> lambda_grid = {},
                             LassoPath* path = nullptr);

/// Smallest lambda at which the lasso baseline is identically zero.
double lasso_lambda_max(const LongitudinalDataset& dataset);

/// MDSP fit of one new individual with the group effects frozen. Coefficients
/// on a frozen direction carry no degrees of freedom. A missing lambda_star is
/// tuned by Mallows' Cp when a positive noise variance (normally the training
/// fit's) is given, else by GCV. With a handful of measurements GCV rewards
/// the nearly saturated fit, so pass the variance whenever it is known.
FitResult fit_semi_new(const Eigen::VectorXd& y, const RowMajorMatrix& x,
                       const RowMajorMatrix& z, const std::vector<Eigen::VectorXd>& gamma_hat,
                       std::optional<double> lambda_star, const ModelConfig& config = {},
                       std::optional<double> noise_variance = std::nullopt);

}  // namespace mdsp
