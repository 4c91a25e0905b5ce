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

#include <cstddef>

#include <Eigen/Dense>

#include "mdsp/dataset.hpp"

namespace mdsp {

/// Working correlation R(rho) of one individual's m measurements. The
/// weighting in the loss is R^{-1}, applied through closed forms.
class CorrelationModel {
 public:
  static constexpr double kBoundaryMargin = 1e-6;

  /// Throws DegenerateCorrelation when rho is at or beyond the
  /// positive-definiteness bound of `kind`.
  CorrelationModel(CorrelationKind kind, double rho, std::size_t m);
  static CorrelationModel independence(std::size_t m) {
    return {CorrelationKind::independence, 0.0, m};
  }

  CorrelationKind kind() const { return kind_; }
  double rho() const { return rho_; }
  std::size_t m() const { return m_; }

  /// R^{-1} v for vector expressions, R^{-1} B column by column otherwise.
  template <typename Derived>
  auto inverse_apply(const Eigen::MatrixBase<Derived>& b) const {
    if constexpr (Derived::ColsAtCompileTime == 1) return apply_vector(b);
    else return apply_matrix(b);
  }
  Eigen::VectorXd apply_vector(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd apply_matrix(const Eigen::Ref<const Eigen::MatrixXd>& b) const;
  Eigen::MatrixXd matrix() const;
  Eigen::MatrixXd inverse_matrix() const;

  /// Open interval of admissible rho for `kind` and m.
  static std::pair<double, double> bounds(CorrelationKind kind, std::size_t m);

 private:
  CorrelationKind kind_;
  double rho_;
  std::size_t m_;
};

/// One-step moment estimate of rho from independence-model residuals
/// (N x m), clipped into the admissible interval minus kBoundaryMargin.
/// Independence always returns 0. Throws ZeroVariance for all-zero
/// residuals.
double estimate_rho(CorrelationKind kind, const Eigen::Ref<const Eigen::MatrixXd>& residuals);

}  // namespace mdsp
