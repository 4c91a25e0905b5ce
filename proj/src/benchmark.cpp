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
#include "mdsp/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"
#include "mdsp/parallel.hpp"
#include "mdsp/random.hpp"
#include "mdsp/tuning.hpp"

namespace mdsp {

namespace {

using nlohmann::json;

constexpr double kMaxFailureRate = 0.05;

const std::vector<std::pair<Scenario, std::string>>& scenario_table() {
  static const std::vector<std::pair<Scenario, std::string>> t{
      {Scenario::single_covariate, "single_covariate"},
      {Scenario::two_covariate_correlated, "two_covariate_correlated"},
      {Scenario::homogeneous_misspec, "homogeneous_misspec"},
      {Scenario::three_group_misspec, "three_group_misspec"},
      {Scenario::semi_new, "semi_new"},
  };
  return t;
}

std::string join(const std::vector<std::string>& v, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

std::string to_string(Scenario s) {
  for (const auto& [k, name] : scenario_table())
    if (k == s) return name;
  return "unknown";
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& e : scenario_table()) v.push_back(e.second);
    return v;
  }();
  return names;
}

Scenario parse_scenario(const std::string& name) {
  for (const auto& [k, n] : scenario_table())
    if (n == name) return k;
  throw Error(ErrorCode::InvalidSpec,
              "unknown scenario '" + name + "'; valid scenarios: " + join(scenario_names()));
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"mdsp",  "mdsp:ind", "mdsp:exch", "mdsp:ar1",
                                              "sub",   "homo",     "lasso",     "oracle",
                                              "ols"};
  return names;
}

std::size_t ExperimentSpec::p() const {
  switch (scenario) {
    case Scenario::two_covariate_correlated:
    case Scenario::semi_new: return 2;
    default: return 1;
  }
}

void ExperimentSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (n_replications < 1) fail("n_replications must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("sigma must be positive");
  if (fit_groups < 1) fail("fit_groups must be >= 1");
  const std::size_t need = scenario == Scenario::single_covariate ||
                                   scenario == Scenario::homogeneous_misspec
                               ? 1
                               : 2;
  if (gamma_truth.size() != need)
    fail(to_string(scenario) + " needs " + std::to_string(need) + " gamma_truth value(s), got " +
         std::to_string(gamma_truth.size()));
  for (double g : gamma_truth)
    if (!std::isfinite(g)) fail("gamma_truth must be finite");
  if (scenario == Scenario::semi_new) {
    if (m_star.empty()) fail("semi_new needs a nonempty m_star list");
    if (n_star < 1 || train_n < 2 || train_m < 2) fail("semi_new sizes must be positive");
    for (std::size_t ms : m_star)
      if (ms < 2) fail("m_star values must be >= 2");
  } else {
    if (n < 2) fail("N must be >= 2");
    if (m < 2) fail("m must be >= 2");
  }
  if (error_correlation != CorrelationKind::independence) {
    const std::size_t mm = scenario == Scenario::semi_new ? train_m : m;
    CorrelationModel(error_correlation, rho, mm);  // throws DegenerateCorrelation
  }
  for (const auto& method : methods)
    if (std::find(method_names().begin(), method_names().end(), method) == method_names().end())
      fail("unknown method '" + method + "'; valid methods: " + join(method_names()));
  if (methods.empty()) fail("methods must be nonempty");
}

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("experiment spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "experiment spec must be a JSON object");
  ExperimentSpec s;
  try {
    if (j.contains("scenario")) s.scenario = parse_scenario(j.at("scenario").get<std::string>());
    s.name = j.value("name", to_string(s.scenario));
    s.n = j.value("N", s.n);
    s.m = j.value("m", s.m);
    if (s.scenario == Scenario::semi_new && !j.contains("gamma_truth")) s.gamma_truth = {1.0, -2.0};
    if (s.scenario == Scenario::two_covariate_correlated && !j.contains("gamma_truth"))
      s.gamma_truth = {1.0, -2.0};
    if (s.scenario == Scenario::three_group_misspec && !j.contains("gamma_truth"))
      s.gamma_truth = {-3.0, 1.0};
    if (j.contains("gamma_truth")) s.gamma_truth = j.at("gamma_truth").get<std::vector<double>>();
    s.sigma = j.value("sigma", s.sigma);
    if (j.contains("error_correlation")) {
      const auto& e = j.at("error_correlation");
      if (e.is_string()) {
        s.error_correlation = parse_correlation_kind(e.get<std::string>());
      } else {
        s.error_correlation = parse_correlation_kind(e.at("kind").get<std::string>());
        s.rho = e.value("rho", 0.0);
      }
    }
    s.rho = j.value("rho", s.rho);
    s.n_replications = j.value("n_replications", s.n_replications);
    s.seed = j.value("seed", s.seed);
    if (j.contains("methods")) s.methods = j.at("methods").get<std::vector<std::string>>();
    s.fit_groups = j.value("fit_groups", s.fit_groups);
    if (j.contains("m_star")) s.m_star = j.at("m_star").get<std::vector<std::size_t>>();
    s.n_star = j.value("n_star", s.n_star);
    s.train_n = j.value("train_N", s.train_n);
    s.train_m = j.value("train_m", s.train_m);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("experiment spec field error: ") + e.what());
  }
  if (s.scenario == Scenario::semi_new && s.m_star.empty())
    for (std::size_t ms = 6; ms <= 20; ++ms) s.m_star.push_back(ms);
  s.validate();
  return s;
}

std::string experiment_spec_to_json(const ExperimentSpec& s) {
  json j{{"schema_version", 1},
         {"name", s.name},
         {"scenario", to_string(s.scenario)},
         {"N", s.n},
         {"m", s.m},
         {"gamma_truth", s.gamma_truth},
         {"sigma", s.sigma},
         {"error_correlation", {{"kind", to_string(s.error_correlation)}, {"rho", s.rho}}},
         {"n_replications", s.n_replications},
         {"seed", s.seed},
         {"methods", s.methods},
         {"fit_groups", s.fit_groups}};
  if (s.scenario == Scenario::semi_new) {
    j["m_star"] = s.m_star;
    j["n_star"] = s.n_star;
    j["train_N"] = s.train_n;
    j["train_m"] = s.train_m;
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Generators

namespace {

struct Design {
  std::size_t n, m, p;
  Eigen::MatrixXd beta;
  CorrelationKind corr;
  double rho, sigma;
};

SimulatedData simulate(const Design& d, std::mt19937_64& rng) {
  const std::size_t q = 3;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(d.m, d.m);
  if (d.corr != CorrelationKind::independence) {
    const CorrelationModel r(d.corr, d.rho, d.m);
    chol = r.matrix().llt().matrixL();
  }
  const Eigen::Vector3d alpha(1.0, 1.0, 1.0);
  std::vector<double> y(d.n * d.m), x(d.n * d.m * d.p), z(d.n * d.m * q);
  Eigen::VectorXd u(d.m);
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t t = 0; t < d.m; ++t) {
      const std::size_t row = i * d.m + t;
      z[row * q] = 1.0;
      z[row * q + 1] = normal(rng);
      z[row * q + 2] = normal(rng);
      for (std::size_t k = 0; k < d.p; ++k) x[row * d.p + k] = normal(rng);
    }
    for (std::size_t t = 0; t < d.m; ++t) u(t) = normal(rng);
    const Eigen::VectorXd eps = d.sigma * (chol * u);
    for (std::size_t t = 0; t < d.m; ++t) {
      const std::size_t row = i * d.m + t;
      double mean = 0.0;
      for (std::size_t c = 0; c < q; ++c) mean += z[row * q + c] * alpha(c);
      for (std::size_t k = 0; k < d.p; ++k) mean += x[row * d.p + k] * d.beta(i, k);
      y[row] = mean + eps(t);
    }
  }
  SimulatedData out{LongitudinalDataset(d.n, d.m, d.p, q, std::move(y), std::move(x), std::move(z)),
                    d.beta, alpha, {}};
  out.assignment.labels.assign(d.p, std::vector<int>(d.n, 0));
  for (std::size_t k = 0; k < d.p; ++k) {
    std::vector<double> levels;
    for (std::size_t i = 0; i < d.n; ++i) {
      const double v = d.beta(i, k);
      if (v == 0.0) continue;
      auto it = std::find(levels.begin(), levels.end(), v);
      if (it == levels.end()) {
        levels.push_back(v);
        it = levels.end() - 1;
      }
      out.assignment.labels[k][i] = static_cast<int>(it - levels.begin()) + 1;
    }
  }
  return out;
}

Eigen::MatrixXd truth_beta(const ExperimentSpec& s, std::size_t n) {
  const std::size_t p = s.p();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, p);
  const std::size_t half = n / 2;
  switch (s.scenario) {
    case Scenario::single_covariate:
      for (std::size_t i = 0; i < half; ++i) b(i, 0) = s.gamma_truth[0];
      break;
    case Scenario::two_covariate_correlated:
    case Scenario::semi_new:
      for (std::size_t i = 0; i < half; ++i) b(i, 0) = s.gamma_truth[0];
      for (std::size_t i = half; i < n; ++i) b(i, 1) = s.gamma_truth[1];
      break;
    case Scenario::homogeneous_misspec: b.setConstant(s.gamma_truth[0]); break;
    case Scenario::three_group_misspec: {
      const std::size_t third = n / 3;
      for (std::size_t i = 0; i < third; ++i) b(i, 0) = s.gamma_truth[0];
      for (std::size_t i = 2 * third; i < n; ++i) b(i, 0) = s.gamma_truth[1];
      break;
    }
  }
  return b;
}

}  // namespace

SimulatedData generate(const ExperimentSpec& spec, std::size_t replication) {
  spec.validate();
  const bool semi = spec.scenario == Scenario::semi_new;
  const std::size_t n = semi ? spec.train_n : spec.n;
  const std::size_t m = semi ? spec.train_m : spec.m;
  auto rng = make_stream(spec.seed, replication, 0);
  return simulate({n, m, spec.p(), truth_beta(spec, n), spec.error_correlation, spec.rho, spec.sigma},
                  rng);
}

// ---------------------------------------------------------------------------
// Metrics

double rmse(const Eigen::MatrixXd& beta_hat, const Eigen::MatrixXd& beta_truth) {
  if (beta_hat.rows() != beta_truth.rows() || beta_hat.cols() != beta_truth.cols())
    throw Error(ErrorCode::ShapeMismatch, "rmse: coefficient shapes differ");
  if (beta_hat.size() == 0) throw Error(ErrorCode::ShapeMismatch, "rmse: empty coefficients");
  return std::sqrt((beta_hat - beta_truth).squaredNorm() / static_cast<double>(beta_hat.size()));
}

SelectionMetrics selection_metrics(const Eigen::MatrixXd& beta_hat,
                                   const Eigen::MatrixXd& beta_truth) {
  if (beta_hat.rows() != beta_truth.rows() || beta_hat.cols() != beta_truth.cols())
    throw Error(ErrorCode::ShapeMismatch, "selection_metrics: coefficient shapes differ");
  if (beta_hat.size() == 0) throw Error(ErrorCode::ShapeMismatch, "selection_metrics: empty");
  std::size_t correct = 0, pos = 0, tp = 0, neg = 0, tn = 0;
  for (Eigen::Index j = 0; j < beta_hat.size(); ++j) {
    const bool est = beta_hat(j) != 0.0, tru = beta_truth(j) != 0.0;
    correct += est == tru;
    if (tru) {
      ++pos;
      tp += est;
    } else {
      ++neg;
      tn += !est;
    }
  }
  SelectionMetrics s;
  s.cvsr = static_cast<double>(correct) / static_cast<double>(beta_hat.size());
  if (pos) s.sensitivity = static_cast<double>(tp) / static_cast<double>(pos);
  if (neg) s.specificity = static_cast<double>(tn) / static_cast<double>(neg);
  return s;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

namespace {

void score(MethodRun& run, const Eigen::MatrixXd& beta_hat, const Eigen::MatrixXd& truth) {
  run.rmse = rmse(beta_hat, truth);
  run.selection = selection_metrics(beta_hat, truth);
  run.cvsr_by_covariate.clear();
  for (Eigen::Index k = 0; k < truth.cols(); ++k)
    run.cvsr_by_covariate.push_back(selection_metrics(beta_hat.col(k), truth.col(k)).cvsr);
  run.ok = true;
}

void record_fit(MethodRun& run, const FitResult& fit) {
  run.lambda = fit.lambda;
  run.converged = fit.converged;
  run.admm_runs = fit.admm_runs;
  run.admm_converged = fit.admm_converged;
  run.descent_violations = fit.descent_violations;
  run.gamma_hat.clear();
  for (const auto& g : fit.gamma) run.gamma_hat.push_back(g.size() ? g(0) : 0.0);
}

CorrelationKind working_kind(const std::string& method, CorrelationKind fallback) {
  if (method == "mdsp:ind") return CorrelationKind::independence;
  if (method == "mdsp:exch") return CorrelationKind::exchangeable;
  if (method == "mdsp:ar1") return CorrelationKind::ar1;
  return fallback;
}

ModelConfig penalized_config(const ExperimentSpec& spec, CorrelationKind kind, std::size_t rep,
                             std::size_t p) {
  ModelConfig cfg;
  cfg.correlation = kind;
  cfg.groups_per_covariate.assign(p, spec.fit_groups);
  cfg.seed = mix64(spec.seed ^ mix64(rep + 1));
  return cfg;
}

MethodRun run_method(const ExperimentSpec& spec, const SimulatedData& sim, const std::string& method,
                     std::size_t rep) {
  MethodRun run;
  run.replication = rep;
  run.method = method;
  const auto& d = sim.dataset;
  try {
    if (method.rfind("mdsp", 0) == 0) {
      const ModelConfig cfg =
          penalized_config(spec, working_kind(method, spec.error_correlation), rep, d.p());
      const TuningOutcome t = select_lambda(d, cfg);
      record_fit(run, t.fit);
      score(run, t.fit.beta, sim.beta);
    } else {
      ModelConfig cfg;
      cfg.correlation = spec.error_correlation;
      const CorrelationModel corr = resolve_correlation(d, cfg);
      FitResult fit;
      if (method == "sub" || method == "ols") fit = fit_individualwise(d, corr);
      else if (method == "homo") fit = fit_homogeneous(d, corr);
      else if (method == "oracle") fit = fit_oracle(d, sim.assignment, corr);
      else if (method == "lasso") fit = fit_lasso_baseline(d);
      else throw Error(ErrorCode::InvalidSpec, "unknown method " + method);
      record_fit(run, fit);
      score(run, fit.beta, sim.beta);
    }
  } catch (const std::exception& e) {
    run.ok = false;
    run.error = e.what();
  }
  return run;
}

MetricsRow aggregate(const ExperimentSpec& spec, const std::string& method, std::size_t m_star,
                     const std::vector<MethodRun>& runs) {
  MetricsRow row;
  row.scenario = spec.name.empty() ? to_string(spec.scenario) : spec.name;
  row.method = method;
  row.n = spec.scenario == Scenario::semi_new ? spec.n_star : spec.n;
  row.m = spec.scenario == Scenario::semi_new ? m_star : spec.m;
  row.m_star = m_star;
  std::vector<double> r, c, se, sp;
  std::vector<std::vector<double>> ck, g;
  std::size_t total = 0;
  for (const auto& run : runs) {
    if (run.method != method || run.m_star != m_star) continue;
    ++total;
    row.admm_runs += run.admm_runs;
    row.admm_converged += run.admm_converged;
    row.descent_violations += run.descent_violations;
    if (!run.ok) {
      ++row.failures;
      continue;
    }
    r.push_back(run.rmse);
    c.push_back(run.selection.cvsr);
    if (run.selection.sensitivity) se.push_back(*run.selection.sensitivity);
    if (run.selection.specificity) sp.push_back(*run.selection.specificity);
    ck.resize(std::max(ck.size(), run.cvsr_by_covariate.size()));
    for (std::size_t k = 0; k < run.cvsr_by_covariate.size(); ++k) ck[k].push_back(run.cvsr_by_covariate[k]);
    g.resize(std::max(g.size(), run.gamma_hat.size()));
    for (std::size_t k = 0; k < run.gamma_hat.size(); ++k) g[k].push_back(run.gamma_hat[k]);
  }
  row.replications = total - row.failures;
  row.valid = total > 0 && static_cast<double>(row.failures) <= kMaxFailureRate * static_cast<double>(total);
  row.rmse = summarize(r);
  row.cvsr = summarize(c);
  row.sensitivity = summarize(se);
  row.specificity = summarize(sp);
  for (const auto& v : ck) row.cvsr_by_covariate.push_back(summarize(v));
  if (method.rfind("mdsp", 0) == 0)
    for (const auto& v : g) row.gamma_hat.push_back(summarize(v));
  return row;
}

}  // namespace

MetricsTable run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.scenario == Scenario::semi_new) return run_semi_new(spec);
  const auto reps = static_cast<std::size_t>(spec.n_replications);
  const std::size_t nm = spec.methods.size();
  std::vector<MethodRun> runs(reps * nm);
  parallel_for(reps, [&](std::size_t rep) {
    const SimulatedData sim = generate(spec, rep);
    for (std::size_t j = 0; j < nm; ++j) runs[rep * nm + j] = run_method(spec, sim, spec.methods[j], rep);
  });
  MetricsTable table;
  for (const auto& method : spec.methods) table.rows.push_back(aggregate(spec, method, 0, runs));
  table.runs = std::move(runs);
  return table;
}

// ---------------------------------------------------------------------------
// Semi-new individuals

namespace {

struct NewIndividual {
  Eigen::VectorXd y;
  RowMajorMatrix x, z;
  Eigen::VectorXd beta;
};

NewIndividual draw_new(std::size_t m, const std::vector<double>& gamma, double sigma,
                       std::mt19937_64& rng) {
  const std::size_t p = gamma.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  NewIndividual ind;
  ind.beta.resize(static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < p; ++k) ind.beta(k) = coin(rng) ? gamma[k] : 0.0;
  ind.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  ind.z.resize(static_cast<Eigen::Index>(m), 3);
  ind.y.resize(static_cast<Eigen::Index>(m));
  for (std::size_t t = 0; t < m; ++t) {
    ind.z(t, 0) = 1.0;
    ind.z(t, 1) = normal(rng);
    ind.z(t, 2) = normal(rng);
    for (std::size_t k = 0; k < p; ++k) ind.x(t, k) = normal(rng);
  }
  for (std::size_t t = 0; t < m; ++t)
    ind.y(t) = ind.z.row(t).sum() + ind.x.row(t).dot(ind.beta) + sigma * normal(rng);
  return ind;
}

// Per-individual least squares on [Z, X] with selection by two-sided
// t-tests at the 5% level.
std::pair<Eigen::VectorXd, Eigen::VectorXd> ols_with_tests(const NewIndividual& ind) {
  const Eigen::Index m = ind.y.size(), p = ind.x.cols(), q = ind.z.cols();
  Eigen::MatrixXd design(m, p + q);
  design << ind.z, ind.x;
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12))
    throw Error(ErrorCode::SingularSystem, "per-individual OLS design is singular");
  const Eigen::VectorXd theta = ldlt.solve(design.transpose() * ind.y);
  const Eigen::VectorXd beta = theta.tail(p);
  Eigen::VectorXd selected = beta;
  const Eigen::Index resid_df = m - p - q;
  if (resid_df < 1) {
    selected.setZero();
    return {beta, selected};
  }
  const double s2 = (ind.y - design * theta).squaredNorm() / static_cast<double>(resid_df);
  const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p + q, p + q));
  const boost::math::students_t dist(static_cast<double>(resid_df));
  for (Eigen::Index k = 0; k < p; ++k) {
    const double se = std::sqrt(s2 * cov(q + k, q + k));
    const double t = se > 0 ? std::abs(beta(k)) / se : 0.0;
    const double pval = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    if (!(pval < 0.05)) selected(k) = 0.0;
  }
  return {beta, selected};
}

}  // namespace

MetricsTable run_semi_new(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.scenario != Scenario::semi_new)
    throw Error(ErrorCode::InvalidSpec, "run_semi_new needs the semi_new scenario");
  const auto reps = static_cast<std::size_t>(spec.n_replications);
  const std::size_t p = spec.p();
  std::vector<std::string> methods;
  for (const auto& m : spec.methods) {
    if (m.rfind("mdsp", 0) == 0) methods.push_back("mdsp");
    else if (m == "sub" || m == "ols") methods.push_back("ols");
    else if (m == "lasso" || m == "homo") methods.push_back(m);
  }
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  if (methods.empty())
    throw Error(ErrorCode::InvalidSpec, "semi_new supports the methods mdsp, ols, lasso, homo");

  const std::size_t ns = spec.m_star.size();
  std::vector<MethodRun> runs(reps * ns * methods.size());
  parallel_for(reps * ns, [&](std::size_t job) {
    const std::size_t rep = job / ns, si = job % ns;
    const std::size_t ms = spec.m_star[si];
    // Training is deterministic in rep, so every m* job of one replication
    // sees the same directions.
    const SimulatedData train = generate(spec, rep);
    ModelConfig cfg = penalized_config(spec, spec.error_correlation, rep, p);
    std::vector<Eigen::VectorXd> gamma_hat;
    double train_lambda = 0.0;
    Eigen::VectorXd beta_h;
    std::string train_error;
    try {
      const TuningOutcome t = select_lambda(train.dataset, cfg);
      gamma_hat = t.fit.gamma;
      train_lambda = t.fit.lambda;
      ModelConfig hc;
      hc.correlation = spec.error_correlation;
      const FitResult homo = fit_homogeneous(train.dataset, resolve_correlation(train.dataset, hc));
      beta_h = homo.beta.row(0).transpose();
    } catch (const std::exception& e) {
      train_error = e.what();
    }
    auto rng = make_stream(spec.seed, rep, 1000 + ms);
    std::vector<NewIndividual> people;
    for (std::size_t i = 0; i < spec.n_star; ++i) people.push_back(draw_new(ms, spec.gamma_truth, spec.sigma, rng));
    Eigen::MatrixXd truth(spec.n_star, p);
    for (std::size_t i = 0; i < spec.n_star; ++i) truth.row(i) = people[i].beta.transpose();

    for (std::size_t j = 0; j < methods.size(); ++j) {
      MethodRun& run = runs[job * methods.size() + j];
      run.replication = rep;
      run.m_star = ms;
      run.method = methods[j];
      if (!train_error.empty()) {
        run.error = "training failed: " + train_error;
        continue;
      }
      try {
        Eigen::MatrixXd est(spec.n_star, p), sel(spec.n_star, p);
        ModelConfig new_cfg;
        new_cfg.seed = cfg.seed;
        for (std::size_t i = 0; i < spec.n_star; ++i) {
          const auto& ind = people[i];
          if (methods[j] == "mdsp") {
            const FitResult f = fit_semi_new(ind.y, ind.x, ind.z, gamma_hat, train_lambda, new_cfg);
            est.row(i) = f.beta.row(0);
            sel.row(i) = f.beta.row(0);
            run.converged = run.converged && f.converged;
            run.admm_runs += f.admm_runs;
            run.admm_converged += f.admm_converged;
          } else if (methods[j] == "ols") {
            const auto [b, s] = ols_with_tests(ind);
            est.row(i) = b.transpose();
            sel.row(i) = s.transpose();
          } else if (methods[j] == "lasso") {
            const std::size_t m = static_cast<std::size_t>(ind.y.size());
            const LongitudinalDataset one(
                1, m, p, 3, std::vector<double>(ind.y.data(), ind.y.data() + m),
                std::vector<double>(ind.x.data(), ind.x.data() + m * p),
                std::vector<double>(ind.z.data(), ind.z.data() + m * 3));
            const FitResult f = fit_lasso_baseline(one);
            est.row(i) = f.beta.row(0);
            sel.row(i) = f.beta.row(0);
          } else {
            est.row(i) = beta_h.transpose();
            sel.row(i) = beta_h.transpose();
          }
        }
        run.rmse = rmse(est, truth);
        run.selection = selection_metrics(sel, truth);
        run.cvsr_by_covariate.clear();
        for (std::size_t k = 0; k < p; ++k)
          run.cvsr_by_covariate.push_back(selection_metrics(sel.col(k), truth.col(k)).cvsr);
        if (methods[j] == "mdsp")
          for (const auto& g : gamma_hat) run.gamma_hat.push_back(g.size() ? g(0) : 0.0);
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  });
  MetricsTable table;
  for (std::size_t ms : spec.m_star)
    for (const auto& method : methods) table.rows.push_back(aggregate(spec, method, ms, runs));
  table.runs = std::move(runs);
  return table;
}

MetricsTable run(const ExperimentSpec& spec) {
  return spec.scenario == Scenario::semi_new ? run_semi_new(spec) : run_experiment(spec);
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string fmt(double v, int precision = 6) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}
std::string fmt(const std::optional<double>& v, int precision = 6) {
  return v ? fmt(*v, precision) : "";
}
std::string fmt_mean(const Summary& s, int precision = 6) {
  return s.count ? fmt(s.mean, precision) : "";
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const MetricsRow* MetricsTable::find(const std::string& method, std::size_t m_star) const {
  for (const auto& r : rows)
    if (r.method == method && r.m_star == m_star) return &r;
  return nullptr;
}

std::string MetricsTable::to_csv() const {
  std::ostringstream os;
  os << "scenario,method,N,m,m_star,replications,failures,valid,rmse_mean,rmse_sd,cvsr_mean,"
        "cvsr_sd,sensitivity_mean,sensitivity_sd,specificity_mean,specificity_sd,"
        "cvsr_by_covariate,gamma_hat_mean,gamma_hat_sd,admm_runs,admm_converged,"
        "descent_violations\n";
  for (const auto& r : rows) {
    std::string ck, gm, gs;
    for (std::size_t k = 0; k < r.cvsr_by_covariate.size(); ++k)
      ck += (k ? ";" : "") + fmt_mean(r.cvsr_by_covariate[k]);
    for (std::size_t k = 0; k < r.gamma_hat.size(); ++k) {
      gm += (k ? ";" : "") + fmt_mean(r.gamma_hat[k]);
      gs += (k ? ";" : "") + fmt(r.gamma_hat[k].sd);
    }
    os << csv_quote(r.scenario) << ',' << r.method << ',' << r.n << ',' << r.m << ','
       << r.m_star << ',' << r.replications << ',' << r.failures << ','
       << (r.valid ? "true" : "false") << ',' << fmt_mean(r.rmse) << ',' << fmt(r.rmse.sd) << ','
       << fmt_mean(r.cvsr) << ',' << fmt(r.cvsr.sd) << ',' << fmt_mean(r.sensitivity) << ','
       << fmt(r.sensitivity.sd) << ',' << fmt_mean(r.specificity) << ','
       << fmt(r.specificity.sd) << ',' << ck << ',' << gm << ',' << gs << ',' << r.admm_runs
       << ',' << r.admm_converged << ',' << r.descent_violations << '\n';
  }
  return os.str();
}

std::string MetricsTable::to_text() const {
  std::vector<std::vector<std::string>> cells{
      {"scenario", "method", "N", "m", "reps", "fail", "RMSE", "sd", "CVSR", "sens", "spec",
       "gamma_hat"}};
  for (const auto& r : rows) {
    std::string g;
    for (std::size_t k = 0; k < r.gamma_hat.size(); ++k) {
      g += (k ? " " : "") + fmt_mean(r.gamma_hat[k], 4);
      if (r.gamma_hat[k].sd) g += "(" + fmt(*r.gamma_hat[k].sd, 2) + ")";
    }
    cells.push_back({r.scenario + (r.valid ? "" : " [invalid]"), r.method, std::to_string(r.n),
                     std::to_string(r.m), std::to_string(r.replications),
                     std::to_string(r.failures), fmt_mean(r.rmse, 4), fmt(r.rmse.sd, 3),
                     fmt_mean(r.cvsr, 4), fmt_mean(r.sensitivity, 4), fmt_mean(r.specificity, 4), g});
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << (c ? "  " : "");
      if (c < 2) os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else os << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    os << '\n';
  }
  return os.str();
}

std::string MetricsTable::raw_csv() const {
  std::ostringstream os;
  os << "replication,m_star,method,ok,rmse,cvsr,sensitivity,specificity,lambda,gamma_hat,"
        "converged,admm_runs,admm_converged,descent_violations,error\n";
  for (const auto& r : runs) {
    std::string g;
    for (std::size_t k = 0; k < r.gamma_hat.size(); ++k) g += (k ? ";" : "") + fmt(r.gamma_hat[k], 10);
    os << r.replication << ',' << r.m_star << ',' << r.method << ',' << (r.ok ? 1 : 0) << ','
       << (r.ok ? fmt(r.rmse, 10) : "") << ',' << (r.ok ? fmt(r.selection.cvsr, 10) : "") << ','
       << fmt(r.selection.sensitivity, 10) << ',' << fmt(r.selection.specificity, 10) << ','
       << fmt(r.lambda, 10) << ',' << g << ',' << (r.converged ? 1 : 0) << ',' << r.admm_runs
       << ',' << r.admm_converged << ',' << r.descent_violations << ',' << csv_quote(r.error)
       << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Presets

std::vector<ExperimentSpec> paper_preset(const std::string& table, int reps, std::uint64_t seed) {
  std::vector<ExperimentSpec> out;
  auto base = [&](Scenario s) {
    ExperimentSpec e;
    e.scenario = s;
    e.n_replications = reps;
    e.seed = seed;
    return e;
  };
  if (table == "1") {
    for (double g : {1.0, 2.0})
      for (auto [n, m] : {std::pair<std::size_t, std::size_t>{40, 10}, {40, 20}, {100, 10}, {100, 20}}) {
        ExperimentSpec e = base(Scenario::single_covariate);
        e.gamma_truth = {g};
        e.n = n;
        e.m = m;
        e.name = "table1_gamma" + fmt(g) + "_N" + std::to_string(n) + "_m" + std::to_string(m);
        e.methods = {"mdsp", "sub", "homo", "lasso", "oracle"};
        out.push_back(e);
      }
  } else if (table == "2") {
    for (auto kind : {CorrelationKind::exchangeable, CorrelationKind::ar1})
      for (std::size_t n : {20, 80})
        for (std::size_t m : {10, 20}) {
          ExperimentSpec e = base(Scenario::two_covariate_correlated);
          e.gamma_truth = {1.0, -2.0};
          e.error_correlation = kind;
          e.rho = 0.5;
          e.n = n;
          e.m = m;
          e.name = "table2_" + to_string(kind) + "_N" + std::to_string(n) + "_m" + std::to_string(m);
          e.methods = {"mdsp:ar1", "mdsp:exch", "mdsp:ind"};
          out.push_back(e);
        }
  } else if (table == "3") {
    ExperimentSpec h = base(Scenario::homogeneous_misspec);
    h.gamma_truth = {2.0};
    h.n = 60;
    h.m = 10;
    h.name = "table3_homogeneous";
    h.methods = {"mdsp", "sub", "lasso"};
    out.push_back(h);
    ExperimentSpec t = base(Scenario::three_group_misspec);
    t.gamma_truth = {-3.0, 1.0};
    t.n = 60;
    t.m = 10;
    t.name = "table3_three_group";
    t.methods = {"mdsp", "sub", "lasso"};
    out.push_back(t);
  } else if (table == "semi-new") {
    ExperimentSpec e = base(Scenario::semi_new);
    e.gamma_truth = {1.0, -2.0};
    e.error_correlation = CorrelationKind::ar1;
    e.rho = 0.5;
    e.train_n = 100;
    e.train_m = 20;
    e.n_star = 100;
    for (std::size_t ms = 6; ms <= 20; ++ms) e.m_star.push_back(ms);
    e.name = "semi_new";
    e.methods = {"mdsp", "ols", "lasso", "homo"};
    out.push_back(e);
  } else {
    throw Error(ErrorCode::InvalidSpec,
                "unknown preset table '" + table + "'; valid tables: 1, 2, 3, semi-new");
  }
  for (auto& e : out) e.validate();
  return out;
}

}  // namespace mdsp
