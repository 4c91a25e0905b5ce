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

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mdsp/dataset.hpp"

namespace mdsp {

/// Shrink targets for one covariate: 0 followed by the group effects, with
/// exact duplicates collapsed.
class DirectionSet {
 public:
  DirectionSet() : targets_{0.0} {}
  explicit DirectionSet(std::span<const double> group_effects);
  explicit DirectionSet(const Eigen::VectorXd& group_effects)
      : DirectionSet(std::span<const double>(group_effects.data(),
                                             static_cast<std::size_t>(group_effects.size()))) {}

  const std::vector<double>& targets() const { return targets_; }
  double distance(double beta) const;
  double nearest(double beta) const;

 private:
  std::vector<double> targets_;
};

/// lambda * min_d |beta - d|.
double mdsp_value(double beta, const DirectionSet& directions, double lambda);

/// argmin_v (kappa/2)(v - u)^2 + lambda * min_d |v - d|. Ties go to the
/// smallest |v|, then to the zero direction.
double prox_mdsp(double u, const DirectionSet& directions, double lambda, double kappa);

struct GammaUpdate {
  Eigen::VectorXd gamma;
  // Set when some group had no admissible candidate and kept its value
  // (or fell back to the fixed grid under a sign constraint).
  bool empty_candidates = false;
  double objective = 0.0;  // lambda * sum_i min_d |nu_i - d|
};

/// Centers minimizing sum_i min_d |nu_i - d| over the distinct nonzero
/// values of nu (cyclic over groups when there are several). Ties go to
/// the candidate closest to the current center.
GammaUpdate update_gamma(std::span<const double> nu_column,
                         const Eigen::VectorXd& current_gamma, double lambda,
                         std::span<const SignConstraint> constraints,
                         int grid_resolution = 200);

/// Profile objective of one center c with the other directions fixed:
/// sum_i min_v (kappa/2)(v - u_i)^2 + lambda min(|v - c|, min_{d in others}|v - d|).
double direction_profile(std::span<const double> u, double center,
                         std::span<const double> others, double lambda, double kappa);

/// Exact minimizer of direction_profile over the admissible half-line or
/// the whole line. The profile is piecewise quadratic with at most 4N
/// breakpoints; the sweep costs O(N log N). Returns `current` when no
/// point does strictly better.
double minimize_direction_profile(std::span<const double> u, double current,
                                  std::span<const double> others, double lambda,
                                  double kappa, SignConstraint constraint);

struct DirectionBlock {
  Eigen::VectorXd gamma;
  Eigen::VectorXd nu;
  int sweeps = 0;
};

/// Joint minimization over (nu, gamma) of
///   sum_i (kappa/2)(nu_i - u_i)^2 + lambda min_d |nu_i - d|
/// for one covariate. With a single nonzero group the result is exact;
/// with several, groups are swept cyclically (at most 10 sweeps or until
/// the relative objective change is below 1e-10).
DirectionBlock minimize_direction_block(std::span<const double> u,
                                        const Eigen::VectorXd& gamma, double lambda,
                                        double kappa,
                                        std::span<const SignConstraint> constraints);

double direction_block_objective(std::span<const double> u, std::span<const double> nu,
                                 const DirectionSet& directions, double lambda,
                                 double kappa);

}  // namespace mdsp
