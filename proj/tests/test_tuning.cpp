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
#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "mdsp/tuning.hpp"
#include "test_util.hpp"

namespace mdsp {
namespace {

using testing::random_panel;
using testing::two_group_beta;

FitResult toy_fit(const Eigen::MatrixXd& beta, std::size_t q) {
  FitResult f;
  f.beta = beta;
  f.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q));
  f.gamma.assign(static_cast<std::size_t>(beta.cols()), Eigen::VectorXd::Zero(1));
  return f;
}

TEST(DegreesOfFreedom, AllZeroCountsSharedOnly) {
  EXPECT_EQ(degrees_of_freedom(toy_fit(Eigen::MatrixXd::Zero(5, 2), 3)), 3u);
}

TEST(DegreesOfFreedom, CountsDistinctNonzeroValues) {
  Eigen::MatrixXd b(4, 2);
  b << 0, 2, 1.2, 0, 1.2, 2, 0.7, 2;
  EXPECT_EQ(degrees_of_freedom(toy_fit(b, 3)), 3u + 2u + 1u);
}

TEST(Gcv, FormulaAndPerfectFit) {
  EXPECT_DOUBLE_EQ(gcv_value(4.0, 100, 10), 4.0 / 8100.0);
  EXPECT_EQ(gcv_value(0.0, 100, 10), 0.0);
  EXPECT_THROW(gcv_value(1.0, 10, 10), Error);
}

TEST(Gcv, MonotoneInRssAndDf) {
  for (double rss : {0.5, 1.0, 2.0})
    EXPECT_LT(gcv_value(rss, 50, 5), gcv_value(rss * 1.01, 50, 5));
  for (std::size_t df : {1u, 10u, 40u}) EXPECT_LT(gcv_value(3.0, 50, df), gcv_value(3.0, 50, df + 1));
}

TEST(Gcv, NoiselessFitIsZero) {
  const auto d = random_panel(6, 5, 1, 2, two_group_beta(6, 1.0), Eigen::Vector2d(1, 1), 0.0, 1);
  const auto fit = fit_individualwise(d, CorrelationModel::independence(5));
  EXPECT_LT(gcv(fit, d), 1e-25);
}

TEST(LambdaMax, MatchesDefinition) {
  const auto d = random_panel(6, 5, 2, 2, Eigen::MatrixXd::Random(6, 2), Eigen::Vector2d(1, 1),
                              1.0, 2);
  const CorrelationModel corr(CorrelationKind::ar1, 0.4, 5);
  const Eigen::MatrixXd w = corr.matrix().inverse();
  double want = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    want = std::max(want, (d.x(i).transpose() * w * d.y(i)).cwiseAbs().maxCoeff());
  EXPECT_NEAR(lambda_max(d, corr), want, 1e-12 * want);
}

TEST(DefaultGrid, LogSpacedAscending) {
  const auto d = random_panel(6, 5, 1, 2, two_group_beta(6, 1.0), Eigen::Vector2d(1, 1), 1.0, 3);
  const auto corr = CorrelationModel::independence(5);
  const auto grid = default_lambda_grid(d, corr);
  ASSERT_EQ(grid.size(), 30u);
  const double top = lambda_max(d, corr);
  EXPECT_NEAR(grid.back(), top, 1e-12 * top);
  EXPECT_NEAR(grid.front(), 1e-3 * top, 1e-15 * top);
  for (std::size_t j = 2; j < grid.size(); ++j)
    EXPECT_NEAR(std::log(grid[j] / grid[j - 1]), std::log(grid[1] / grid[0]), 1e-10);
}

TEST(SelectLambda, ZeroGridIsIndividualWise) {
  const auto d = random_panel(10, 8, 1, 3, two_group_beta(10, 1.0), Eigen::Vector3d(1, 1, 1),
                              1.0, 4);
  const auto out = select_lambda(d, {}, {0.0});
  EXPECT_EQ(out.report.chosen_lambda, 0.0);
  const auto ind = fit_individualwise(d, CorrelationModel::independence(8));
  EXPECT_LT((out.fit.beta - ind.beta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SelectLambda, NoiselessTwoGroupsSelectPerfectly) {
  const Eigen::MatrixXd truth = two_group_beta(20, 2.0);
  const auto d = random_panel(20, 10, 1, 3, truth, Eigen::Vector3d(1, 1, 1), 0.0, 5);
  const auto out = select_lambda(d, {});
  for (Eigen::Index i = 0; i < 20; ++i)
    EXPECT_EQ(out.fit.beta(i, 0) != 0.0, truth(i, 0) != 0.0) << "individual " << i;
}

TEST(SelectLambda, GridTopSnapsToTwoLevels) {
  // The free direction is unpenalized, so the top of the grid keeps zero plus one shared slope.
  const auto d = random_panel(20, 10, 1, 3, two_group_beta(20, 1.0), Eigen::Vector3d(1, 1, 1),
                              1.0, 6);
  const auto corr = CorrelationModel::independence(10);
  const auto out = select_lambda(d, {}, {lambda_max(d, corr)});
  const double g = out.fit.beta.maxCoeff();
  EXPECT_NE(g, 0.0);
  EXPECT_TRUE((out.fit.beta.array() == 0.0 || out.fit.beta.array() == g).all());
  EXPECT_EQ(out.report.df_per_lambda.front(), 4u);
}

TEST(SelectLambda, TiesGoToLargerLambda) {
  // Both grid points above lambda_max give the same all-zero fit.
  const auto d = random_panel(10, 8, 1, 3, two_group_beta(10, 1.0), Eigen::Vector3d(1, 1, 1),
                              1.0, 7);
  const double top = lambda_max(d, CorrelationModel::independence(8));
  const auto out = select_lambda(d, {}, {2 * top, 3 * top});
  EXPECT_EQ(out.report.chosen_lambda, 3 * top);
}

TEST(SelectLambda, GcvChoiceNearBestInGrid) {
  // Oracle: the RMSE-best point of the same warm-started path.
  std::vector<double> ratio;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd truth = two_group_beta(40, 1.0);
    const auto d = random_panel(40, 10, 1, 3, truth, Eigen::Vector3d(1, 1, 1), 1.0, 300 + rep);
    ModelConfig cfg;
    cfg.seed = rep;
    const auto out = select_lambda(d, cfg);
    const MdspSolver solver(d, cfg);
    std::optional<CoefficientState> init;
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : out.report.lambda_grid) {
      const auto f = solver.fit(lambda, init);
      init = f.state;
      best = std::min(best, std::sqrt((f.beta - truth).squaredNorm() / 40.0));
    }
    const double chosen = std::sqrt((out.fit.beta - truth).squaredNorm() / 40.0);
    ratio.push_back(chosen / best);
  }
  std::nth_element(ratio.begin(), ratio.begin() + 10, ratio.end());
  EXPECT_LE(ratio[10], 1.10);
}

TEST(ModifiedBic, FormulaAndIncrement) {
  const auto d = random_panel(60, 10, 1, 3, two_group_beta(60, 2.0), Eigen::Vector3d(1, 1, 1),
                              1.0, 8);
  const double mn = 600.0;
  const double b = bic_penalty_factor(60, 1, 3);
  EXPECT_DOUBLE_EQ(b, 2.0 * std::log(std::log(63.0)));
  std::vector<double> penalty;
  for (int groups : {1, 2, 3}) {
    double rss = 0.0;
    const double v = modified_bic(d, 0, groups, {}, &rss);
    EXPECT_NEAR(v, std::log(rss / mn) + b * std::log(mn) / mn * (groups + 3 - 1), 1e-12);
    penalty.push_back(v - std::log(rss / mn));
  }
  // At equal RSS each extra group costs exactly b log(mN)/(mN).
  EXPECT_NEAR(penalty[2] - penalty[1], b * std::log(mn) / mn, 1e-12);
  EXPECT_NEAR(penalty[1] - penalty[0], b * std::log(mn) / mn, 1e-12);
}

TEST(ModifiedBic, TwoGroupsRecoveredWithLongSeries) {
  // Short series let a spurious split pay for itself; m = 100 keeps the penalty ahead.
  int hits = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto d = random_panel(20, 100, 1, 3, two_group_beta(20, 2.0),
                                Eigen::Vector3d(1, 1, 1), 1.0, 500 + rep);
    hits += select_group_numbers(d, {}, 1, 4).chosen_B[0] == 2;
  }
  EXPECT_GE(hits, 8);
}

TEST(SelectGroupNumbers, RejectsBadRange) {
  const auto d = random_panel(6, 5, 1, 2, two_group_beta(6, 1.0), Eigen::Vector2d(1, 1), 1.0, 9);
  EXPECT_THROW(select_group_numbers(d, {}, 0, 3), Error);
  EXPECT_THROW(select_group_numbers(d, {}, 3, 2), Error);
}

}  // namespace
}  // namespace mdsp
