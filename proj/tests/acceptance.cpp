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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails. Every simulation uses seed 7.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdsp/benchmark.hpp"
#include "mdsp/correlation.hpp"
#include "mdsp/penalty.hpp"
#include "mdsp/solver.hpp"
#include "mdsp/tuning.hpp"
#include "test_util.hpp"

namespace {

using namespace mdsp;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeed = 7;
constexpr int kReps = 100;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool near(double value, double target, double tol) { return std::abs(value - target) <= tol; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Collects the ADMM diagnostics of every benchmark table for criterion 8.
struct Diagnostics {
  long runs = 0, converged = 0, violations = 0;
  void add(const MetricsTable& t) {
    for (const auto& r : t.runs) {
      runs += r.admm_runs;
      converged += r.admm_converged;
      violations += r.descent_violations;
    }
  }
};

struct Cell {
  MetricsTable table;
  double seconds = 0.0;
};

Cell run_cell(const ExperimentSpec& spec, Diagnostics& diag) {
  const auto t0 = Clock::now();
  Cell c{run(spec), 0.0};
  c.seconds = seconds_since(t0);
  diag.add(c.table);
  return c;
}

const ExperimentSpec& pick(const std::vector<ExperimentSpec>& specs, const std::string& name) {
  for (const auto& s : specs)
    if (s.name == name) return s;
  throw std::runtime_error("no preset cell named " + name);
}

double mean_rmse(const MetricsTable& t, const std::string& method, std::size_t m_star = 0) {
  const MetricsRow* row = t.find(method, m_star);
  if (!row || !row->valid) return std::numeric_limits<double>::quiet_NaN();
  return row->rmse.mean;
}

struct Report {
  int failures = 0;
  void line(int id, bool ok, const std::string& details) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", id, details.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

// ---------------------------------------------------------------------------

void table1_gamma2(Report& rep, Diagnostics& diag) {
  const auto specs = paper_preset("1", kReps, kSeed);
  struct Target {
    const char* name;
    double mdsp, sub, homo;
  };
  bool ok = true;
  std::string details;
  for (const Target& t : {Target{"table1_gamma2_N40_m10", 0.122, 0.349, 1.004},
                          Target{"table1_gamma2_N100_m20", 0.037, 0.233, 1.001}}) {
    const Cell c = run_cell(pick(specs, t.name), diag);
    const double m = mean_rmse(c.table, "mdsp"), s = mean_rmse(c.table, "sub"),
                 h = mean_rmse(c.table, "homo");
    const bool cell_ok = near(m, t.mdsp, 0.03) && near(s, t.sub, 0.03) && near(h, t.homo, 0.03) &&
                         c.seconds < 600.0;
    ok = ok && cell_ok;
    details += std::string(t.name) + " mdsp " + fmt(m) + " (" + fmt(t.mdsp) + ") sub " + fmt(s) +
               " (" + fmt(t.sub) + ") homo " + fmt(h) + " (" + fmt(t.homo) + ") " +
               fmt(c.seconds) + "s; ";
  }
  rep.line(1, ok, details);
}

void table1_gamma1(Report& rep, Diagnostics& diag) {
  const auto specs = paper_preset("1", kReps, kSeed);
  const Cell a = run_cell(pick(specs, "table1_gamma1_N40_m10"), diag);
  const Cell b = run_cell(pick(specs, "table1_gamma1_N40_m20"), diag);
  const double ra = mean_rmse(a.table, "mdsp"), rb = mean_rmse(b.table, "mdsp");

  // Matched replications of the (40, 10) cell.
  std::map<std::size_t, double> mdsp, sub;
  for (const auto& r : a.table.runs) {
    if (!r.ok) continue;
    if (r.method == "mdsp") mdsp[r.replication] = r.rmse;
    if (r.method == "sub") sub[r.replication] = r.rmse;
  }
  int wins = 0;
  for (const auto& [k, v] : mdsp)
    if (sub.count(k) && v < sub[k]) ++wins;

  const bool ok = near(ra, 0.267, 0.04) && near(rb, 0.119, 0.04) && wins >= 90;
  rep.line(2, ok,
           "mdsp N40 m10 " + fmt(ra) + " (0.267), N40 m20 " + fmt(rb) +
               " (0.119); mdsp beats sub in " + std::to_string(wins) + "/100");
}

void table2(Report& rep, Diagnostics& diag) {
  const auto specs = paper_preset("2", kReps, kSeed);
  const Cell ex = run_cell(pick(specs, "table2_exch_N80_m10"), diag);
  const Cell ar = run_cell(pick(specs, "table2_ar1_N80_m10"), diag);
  const double exch = mean_rmse(ex.table, "mdsp:exch"), ind = mean_rmse(ex.table, "mdsp:ind");
  const double ar1 = mean_rmse(ar.table, "mdsp:ar1");
  const bool ok = near(exch, 0.110, 0.03) && exch <= 0.6 * ind && near(ar1, 0.183, 0.03);
  rep.line(3, ok,
           "exch truth: exch " + fmt(exch) + " (0.110), ind " + fmt(ind) + ", reduction " +
               fmt(100.0 * (1.0 - exch / ind)) + "%; ar1 truth: ar1 " + fmt(ar1) + " (0.183)");
}

void table3(Report& rep, Diagnostics& diag) {
  const auto specs = paper_preset("3", kReps, kSeed);
  const Cell h = run_cell(pick(specs, "table3_homogeneous"), diag);
  const Cell t = run_cell(pick(specs, "table3_three_group"), diag);
  const MetricsRow* hr = h.table.find("mdsp");
  const MetricsRow* tr = t.table.find("mdsp");
  const double g = hr->gamma_hat.empty() ? std::nan("") : hr->gamma_hat[0].mean;
  const bool homo_ok = near(hr->rmse.mean, 0.115, 0.03) && hr->cvsr.mean >= 0.98 && near(g, 2.01, 0.03);
  const bool three_ok = near(tr->rmse.mean, 0.277, 0.05) && near(tr->cvsr.mean, 0.901, 0.05);
  rep.line(4, homo_ok && three_ok,
           "homogeneous rmse " + fmt(hr->rmse.mean) + " (0.115) cvsr " + fmt(hr->cvsr.mean) +
               " (>=0.98) gamma " + fmt(g) + " (2.01); three-group rmse " + fmt(tr->rmse.mean) +
               " (0.277) cvsr " + fmt(tr->cvsr.mean) + " (0.901)");
}

void semi_new(Report& rep, Diagnostics& diag) {
  const ExperimentSpec spec = paper_preset("semi-new", 5, kSeed).front();
  const Cell c = run_cell(spec, diag);
  const double m6 = mean_rmse(c.table, "mdsp", 6), l6 = mean_rmse(c.table, "lasso", 6),
               o6 = mean_rmse(c.table, "ols", 6);
  bool below_homo = true;
  std::string worst;
  for (std::size_t ms : spec.m_star) {
    const double m = mean_rmse(c.table, "mdsp", ms), h = mean_rmse(c.table, "homo", ms);
    if (!(m < h)) {
      below_homo = false;
      worst += " m*=" + std::to_string(ms);
    }
  }
  const bool ok = m6 <= 0.7 * l6 && m6 <= o6 / 3.0 && below_homo;
  rep.line(5, ok,
           "m*=6 mdsp " + fmt(m6) + " lasso " + fmt(l6) + " ols " + fmt(o6) +
               "; mdsp below homo at every m*" + (below_homo ? "" : " except" + worst));
}

// ---------------------------------------------------------------------------

double prox_objective(double v, double u, const std::vector<double>& dirs, double lambda,
                      double kappa) {
  double dist = std::numeric_limits<double>::infinity();
  for (double d : dirs) dist = std::min(dist, std::abs(v - d));
  return 0.5 * kappa * (v - u) * (v - u) + lambda * dist;
}

void prox_oracle(Report& rep) {
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(0.01, 5.0);
  std::uniform_int_distribution<int> count(1, 3);
  const auto t0 = Clock::now();
  int bad = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> effects(static_cast<std::size_t>(count(rng)));
    for (double& e : effects) e = 4.0 * unit(rng);
    const double u = 5.0 * unit(rng), lambda = scale(rng), kappa = scale(rng);
    std::vector<double> dirs = effects;
    dirs.push_back(0.0);

    const double v = prox_mdsp(u, DirectionSet(std::span<const double>(effects)), lambda, kappa);
    const double got = prox_objective(v, u, dirs, lambda, kappa);

    const double spread = 2.0 * lambda / kappa + std::abs(u);
    const double lo = *std::min_element(dirs.begin(), dirs.end()) - spread;
    const double hi = *std::max_element(dirs.begin(), dirs.end()) + spread;
    constexpr int kPoints = 20001;
    double grid_min = std::numeric_limits<double>::infinity();
    for (int j = 0; j < kPoints; ++j) {
      const double x = lo + (hi - lo) * j / (kPoints - 1);
      grid_min = std::min(grid_min, prox_objective(x, u, dirs, lambda, kappa));
    }
    worst = std::max(worst, got - grid_min);
    if (got > grid_min + 1e-8) ++bad;
  }
  const double secs = seconds_since(t0);
  rep.line(6, bad == 0 && secs < 10.0,
           std::to_string(bad) + " of 10000 above the grid minimum; worst excess " + fmt(worst) +
               "; " + fmt(secs) + "s");
}

// Normal equations of the whole stacked system, solved densely.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_primal(const LongitudinalDataset& d,
                                                         const CorrelationModel& corr,
                                                         double kappa, const Eigen::MatrixXd& nu,
                                                         const Eigen::MatrixXd& dual) {
  const auto n = static_cast<Eigen::Index>(d.n_individuals());
  const auto m = static_cast<Eigen::Index>(d.measurements());
  const auto p = static_cast<Eigen::Index>(d.p());
  const auto q = static_cast<Eigen::Index>(d.q());
  const Eigen::MatrixXd a = testing::dense_design(d);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n * m, n * m);
  const Eigen::MatrixXd rinv = corr.matrix().fullPivLu().inverse();
  for (Eigen::Index i = 0; i < n; ++i) w.block(i * m, i * m, m, m) = rinv;
  Eigen::MatrixXd lhs = a.transpose() * w * a;
  Eigen::VectorXd rhs = a.transpose() * w * testing::stacked_y(d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < p; ++k) {
      lhs(i * p + k, i * p + k) += kappa;
      rhs(i * p + k) += kappa * nu(i, k) - dual(i, k);
    }
  const Eigen::VectorXd theta = lhs.fullPivLu().solve(rhs);
  Eigen::MatrixXd beta(n, p);
  for (Eigen::Index i = 0; i < n; ++i) beta.row(i) = theta.segment(i * p, p).transpose();
  return {theta.tail(q), beta};
}

void primal_oracle(Report& rep) {
  std::mt19937_64 rng(kSeed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> pick_n(1, 6), pick_pq(1, 3);
  std::uniform_real_distribution<double> pick_rho(-0.3, 0.8), pick_kappa(0.1, 10.0);
  int bad = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(pick_n(rng));
    const auto p = static_cast<std::size_t>(pick_pq(rng));
    const auto q = static_cast<std::size_t>(pick_pq(rng));
    // Enough measurements that X_i is full rank for every individual.
    const std::size_t m = std::uniform_int_distribution<std::size_t>(p + q, 10)(rng);
    Eigen::MatrixXd beta(n, p);
    for (auto& v : beta.reshaped()) v = g(rng);
    Eigen::VectorXd alpha(q);
    for (auto& v : alpha) v = g(rng);
    const auto d = testing::random_panel(n, m, p, q, beta, alpha, 1.0, 1000 + trial);
    const int kind = trial % 3;
    const CorrelationModel corr =
        kind == 0 ? CorrelationModel::independence(m)
                  : CorrelationModel(kind == 1 ? CorrelationKind::exchangeable : CorrelationKind::ar1,
                                     kind == 1 ? std::abs(pick_rho(rng)) : pick_rho(rng), m);
    Eigen::MatrixXd nu(n, p), dual(n, p);
    for (auto& v : nu.reshaped()) v = g(rng);
    for (auto& v : dual.reshaped()) v = g(rng);
    ModelConfig cfg;
    cfg.kappa = pick_kappa(rng);
    const auto [a, b] = update_primal(d, cfg, corr, nu, dual);
    const auto [a0, b0] = dense_primal(d, corr, *cfg.kappa, nu, dual);
    Eigen::VectorXd x(a.size() + b.size()), x0(a.size() + b.size());
    x << a, b.reshaped();
    x0 << a0, b0.reshaped();
    const double rel = (x - x0).norm() / std::max(1.0, x0.norm());
    worst = std::max(worst, rel);
    if (!(rel <= 1e-9)) ++bad;
  }
  rep.line(7, bad == 0,
           std::to_string(bad) + " of 100 instances off; worst relative error " + fmt(worst));
}

void admm_health(Report& rep, const Diagnostics& diag) {
  const double rate = diag.runs ? static_cast<double>(diag.converged) / diag.runs : 0.0;
  rep.line(8, diag.violations == 0 && diag.runs > 0 && rate >= 0.95,
           std::to_string(diag.violations) + " block-update increases over " +
               std::to_string(diag.runs) + " ADMM runs; converged " + fmt(100.0 * rate) + "%");
}

void strong_oracle(Report& rep) {
  ExperimentSpec spec;
  spec.scenario = Scenario::single_covariate;
  spec.gamma_truth = {2.0};
  spec.n = 40;
  spec.m = 100;
  spec.n_replications = kReps;
  spec.seed = kSeed;
  int hits = 0, assignment_hits = 0;
  for (std::size_t r = 0; r < static_cast<std::size_t>(kReps); ++r) {
    const SimulatedData sim = generate(spec, r);
    ModelConfig cfg;
    cfg.seed = r;
    const TuningOutcome t = select_lambda(sim.dataset, cfg);
    if (!(t.fit.assignment == sim.assignment)) continue;
    ++assignment_hits;
    const FitResult oracle =
        fit_oracle(sim.dataset, sim.assignment, resolve_correlation(sim.dataset, cfg));
    const double diff = std::max((t.fit.beta - oracle.beta).cwiseAbs().maxCoeff(),
                                 (t.fit.alpha - oracle.alpha).cwiseAbs().maxCoeff());
    if (diff <= 1e-6) ++hits;
  }
  rep.line(9, hits >= 90,
           "assignment correct in " + std::to_string(assignment_hits) +
               "/100, equal to the oracle fit in " + std::to_string(hits) + "/100");
}

void bic(Report& rep) {
  ExperimentSpec spec;
  spec.scenario = Scenario::single_covariate;
  spec.gamma_truth = {2.0};
  spec.n = 60;
  spec.m = 10;
  spec.n_replications = 50;
  spec.seed = kSeed;
  std::map<int, int> chosen;
  for (std::size_t r = 0; r < 50; ++r) {
    const SimulatedData sim = generate(spec, r);
    ModelConfig cfg;
    cfg.seed = r;
    ++chosen[select_group_numbers(sim.dataset, cfg, 1, 5).chosen_B[0]];
  }
  std::string dist;
  for (const auto& [b, c] : chosen) dist += " B=" + std::to_string(b) + ":" + std::to_string(c);
  rep.line(10, chosen[2] >= 40, "B=2 chosen in " + std::to_string(chosen[2]) + "/50;" + dist);
}

}  // namespace

int main() {
  Report rep;
  Diagnostics diag;
  const std::vector<std::function<void()>> steps = {
      [&] { table1_gamma2(rep, diag); },  [&] { table1_gamma1(rep, diag); },
      [&] { table2(rep, diag); },         [&] { table3(rep, diag); },
      [&] { semi_new(rep, diag); },       [&] { prox_oracle(rep); },
      [&] { primal_oracle(rep); },        [&] { admm_health(rep, diag); },
      [&] { strong_oracle(rep); },        [&] { bic(rep); }};
  for (std::size_t i = 0; i < steps.size(); ++i) {
    try {
      steps[i]();
    } catch (const std::exception& e) {
      rep.line(static_cast<int>(i + 1), false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", rep.failures, steps.size());
  return rep.failures == 0 ? 0 : 1;
}
