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
#include "mdsp/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mdsp {

std::pair<double, double> CorrelationModel::bounds(CorrelationKind kind, std::size_t m) {
  switch (kind) {
    case CorrelationKind::independence: return {0.0, 0.0};
    case CorrelationKind::exchangeable:
      return {m > 1 ? -1.0 / static_cast<double>(m - 1) : -1.0, 1.0};
    case CorrelationKind::ar1: return {-1.0, 1.0};
  }
  return {0.0, 0.0};
}

CorrelationModel::CorrelationModel(CorrelationKind kind, double rho, std::size_t m)
    : kind_(kind), rho_(rho), m_(m) {
  if (m == 0) throw Error(ErrorCode::InvalidArgument, "correlation needs m >= 1");
  if (kind == CorrelationKind::independence) {
    if (rho != 0.0)
      throw Error(ErrorCode::DegenerateCorrelation, "independence requires rho = 0");
    return;
  }
  const auto [lo, hi] = bounds(kind, m);
  if (!std::isfinite(rho) || rho <= lo || rho >= hi)
    throw Error(ErrorCode::DegenerateCorrelation,
                to_string(kind) + " rho=" + std::to_string(rho) +
                    " outside the positive-definite range (" + std::to_string(lo) +
                    ", " + std::to_string(hi) + ")");
}

Eigen::VectorXd CorrelationModel::apply_vector(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (static_cast<std::size_t>(v.size()) != m_)
    throw Error(ErrorCode::ShapeMismatch, "inverse_apply: vector length != m");
  const Eigen::Index m = v.size();
  switch (kind_) {
    case CorrelationKind::independence: return v;
    case CorrelationKind::exchangeable: {
      // (1/(1-rho)) [I - rho/(1+(m-1)rho) 11']
      const double shrink = rho_ / (1.0 + (static_cast<double>(m) - 1.0) * rho_);
      return (v.array() - shrink * v.sum()).matrix() / (1.0 - rho_);
    }
    case CorrelationKind::ar1: {
      const double scale = 1.0 / (1.0 - rho_ * rho_);
      Eigen::VectorXd out(m);
      if (m == 1) return v;
      for (Eigen::Index t = 0; t < m; ++t) {
        const double diag = (t == 0 || t == m - 1) ? 1.0 : 1.0 + rho_ * rho_;
        double acc = diag * v(t);
        if (t > 0) acc -= rho_ * v(t - 1);
        if (t + 1 < m) acc -= rho_ * v(t + 1);
        out(t) = scale * acc;
      }
      return out;
    }
  }
  return v;
}

Eigen::MatrixXd CorrelationModel::apply_matrix(
    const Eigen::Ref<const Eigen::MatrixXd>& b) const {
  Eigen::MatrixXd out(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) out.col(c) = apply_vector(b.col(c));
  return out;
}

Eigen::MatrixXd CorrelationModel::matrix() const {
  const auto m = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index s = 0; s < m; ++s)
    for (Eigen::Index t = 0; t < m; ++t) {
      if (s == t) continue;
      switch (kind_) {
        case CorrelationKind::independence: break;
        case CorrelationKind::exchangeable: r(s, t) = rho_; break;
        case CorrelationKind::ar1:
          r(s, t) = std::pow(rho_, static_cast<double>(std::abs(s - t)));
          break;
      }
    }
  return r;
}

Eigen::MatrixXd CorrelationModel::inverse_matrix() const {
  const auto m = static_cast<Eigen::Index>(m_);
  return apply_matrix(Eigen::MatrixXd::Identity(m, m));
}

double estimate_rho(CorrelationKind kind, const Eigen::Ref<const Eigen::MatrixXd>& e) {
  if (kind == CorrelationKind::independence) return 0.0;
  const double n = static_cast<double>(e.rows());
  const double m = static_cast<double>(e.cols());
  if (e.size() < 2 || e.cols() < 2)
    throw Error(ErrorCode::InvalidArgument, "estimate_rho needs m >= 2");
  const double sigma2 = e.squaredNorm() / (n * m);
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::ZeroVariance, "residual variance is zero");
  double rho = 0.0;
  if (kind == CorrelationKind::exchangeable) {
    // sum_{t != s} e_t e_s = (sum e)^2 - sum e^2
    const double cross = e.rowwise().sum().squaredNorm() - e.squaredNorm();
    rho = cross / (m * (m - 1.0) * n * sigma2);
  } else {
    double lag = 0.0;
    for (Eigen::Index t = 0; t + 1 < e.cols(); ++t) lag += e.col(t).dot(e.col(t + 1));
    rho = lag / ((m - 1.0) * n * sigma2);
  }
  const auto [lo, hi] = CorrelationModel::bounds(kind, e.cols());
  return std::clamp(rho, lo + CorrelationModel::kBoundaryMargin,
                    hi - CorrelationModel::kBoundaryMargin);
}

}  // namespace mdsp
