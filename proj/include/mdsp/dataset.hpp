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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdsp/error.hpp"

namespace mdsp {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstBlockMap = Eigen::Map<const RowMajorMatrix>;

/// Balanced longitudinal panel: N individuals, m measurements each, p
/// heterogeneous-effect covariates X and q shared covariates Z.
///
/// Storage is dense row-major with the individual as the leading axis, so
/// x(i) and z(i) are zero-copy m-by-p and m-by-q views. Shapes are checked
/// on construction; finiteness and id uniqueness are reported by validate().
class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;
  LongitudinalDataset(std::size_t n, std::size_t m, std::size_t p,
                      std::size_t q, std::vector<double> y,
                      std::vector<double> x, std::vector<double> z,
                      std::vector<std::string> ids = {});

  std::size_t n_individuals() const { return n_; }
  std::size_t measurements() const { return m_; }
  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }
  std::size_t n_observations() const { return n_ * m_; }

  Eigen::Map<const Eigen::VectorXd> y(std::size_t i) const {
    return {y_.data() + i * m_, static_cast<Eigen::Index>(m_)};
  }
  ConstBlockMap x(std::size_t i) const {
    return {x_.data() + i * m_ * p_, static_cast<Eigen::Index>(m_),
            static_cast<Eigen::Index>(p_)};
  }
  ConstBlockMap z(std::size_t i) const {
    return {z_.data() + i * m_ * q_, static_cast<Eigen::Index>(m_),
            static_cast<Eigen::Index>(q_)};
  }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& y_data() const { return y_; }
  const std::vector<double>& x_data() const { return x_; }
  const std::vector<double>& z_data() const { return z_; }

  /// Rows of the panel selected by `order` (used for permutation tests and
  /// for subsetting individuals).
  LongitudinalDataset subset(const std::vector<std::size_t>& order) const;

  bool operator==(const LongitudinalDataset&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t p_ = 0;
  std::size_t q_ = 0;
  std::vector<double> y_;
  std::vector<double> x_;
  std::vector<double> z_;
  std::vector<std::string> ids_;
};

enum class CorrelationKind { independence, exchangeable, ar1 };
enum class SignConstraint { free, positive, negative };

std::string to_string(CorrelationKind kind);
CorrelationKind parse_correlation_kind(const std::string& text);

struct ModelConfig {
  double lambda = 0.0;
  // ADMM augmentation. Unset selects the data-scaled default (see
  // default_kappa in solver.hpp).
  std::optional<double> kappa;
  CorrelationKind correlation = CorrelationKind::independence;
  // Skips the one-step moment estimate when set.
  std::optional<double> fixed_rho;
  // B_k per covariate, counting the zero group. Empty means 2 everywhere.
  std::vector<int> groups_per_covariate;
  // Per covariate, either empty or one entry per nonzero group.
  std::vector<std::vector<SignConstraint>> sign_constraints;
  double eps_primal = 1e-5;
  double eps_residual = 1e-4;
  int max_iterations = 2000;
  int gamma_grid_resolution = 200;
  int restarts = 3;
  std::uint64_t seed = 0;
  // Exact re-solve on the identified active face after snapping.
  bool polish = true;

  int groups_for(std::size_t k) const;
  std::vector<SignConstraint> constraints_for(std::size_t k) const;
  /// Throws Error(InvalidArgument) when an invariant fails for p covariates.
  void validate(std::size_t p) const;
};

/// ADMM variables at one iteration.
struct CoefficientState {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;  // N x p
  Eigen::MatrixXd nu;    // N x p split copy of beta
  std::vector<Eigen::VectorXd> gamma;  // per covariate, B_k - 1 entries
  Eigen::MatrixXd dual;  // N x p

  bool all_finite() const;
};

/// Per covariate labels; 0 is the zero-effect group, l > 0 the group whose
/// coefficient equals gamma[k][l-1] exactly, kFreeLabel a coefficient that
/// sits on no direction.
struct SubgroupAssignment {
  static constexpr int kFreeLabel = -1;
  std::vector<std::vector<int>> labels;  // [k][i]

  int label(std::size_t i, std::size_t k) const { return labels[k][i]; }
  bool operator==(const SubgroupAssignment&) const = default;
};

struct Violation {
  std::string invariant;
  std::string location;
};

std::vector<Violation> validate(const LongitudinalDataset& dataset);

/// Column mapping for long-format CSV ingestion. Empty x/z lists select every
/// column named x<digits> / z<digits> in header order.
struct CsvSchema {
  std::string id = "id";
  std::string time = "time";
  std::string y = "y";
  std::vector<std::string> x;
  std::vector<std::string> z;
};

CsvSchema parse_schema_json(const std::string& json_text);

LongitudinalDataset load_dataset(const std::filesystem::path& path,
                                 const CsvSchema& schema = {});
LongitudinalDataset parse_dataset_csv(const std::string& text,
                                      const CsvSchema& schema = {});
/// Writes `id,time,y,x1..xp,z1..zq` with time = 1..m and round-trip
/// precision.
void write_dataset(const LongitudinalDataset& dataset,
                   const std::filesystem::path& path);
std::string dataset_to_csv(const LongitudinalDataset& dataset);

}  // namespace mdsp
