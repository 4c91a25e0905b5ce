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
#include "mdsp/serialize.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace mdsp {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

json mat(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
  return a;
}

json vec_list(const std::vector<Eigen::VectorXd>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(vec(x));
  return a;
}

json seq(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

Eigen::VectorXd read_vec(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) =
        j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
  return v;
}

Eigen::MatrixXd read_mat(const json& j) {
  if (j.empty()) return {};
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != cols) throw Error(ErrorCode::InvalidSpec, "ragged matrix in fit JSON");
    m.row(static_cast<Eigen::Index>(i)) = read_vec(j[i]).transpose();
  }
  return m;
}

std::vector<Eigen::VectorXd> read_vec_list(const json& j) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& x : j) out.push_back(read_vec(x));
  return out;
}

std::string sign_name(SignConstraint s) {
  switch (s) {
    case SignConstraint::positive: return "positive";
    case SignConstraint::negative: return "negative";
    default: return "free";
  }
}

SignConstraint parse_sign(const std::string& s) {
  if (s == "free") return SignConstraint::free;
  if (s == "positive" || s == "+") return SignConstraint::positive;
  if (s == "negative" || s == "-") return SignConstraint::negative;
  throw Error(ErrorCode::InvalidSpec, "sign constraint must be free, positive or negative, got '" + s + "'");
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string fit_to_json(const FitResult& fit, const std::vector<std::string>& ids) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["method"] = fit.method;
  j["alpha"] = vec(fit.alpha);
  j["beta"] = mat(fit.beta);
  j["gamma"] = vec_list(fit.gamma);
  j["assignment"] = fit.assignment.labels;
  j["correlation"] = to_string(fit.correlation);
  j["rho_hat"] = fit.rho_hat;
  j["lambda"] = fit.lambda;
  j["kappa"] = fit.kappa;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["df"] = fit.df;
  j["noise_variance"] = fit.noise_variance;
  j["objective"] = std::isfinite(fit.objective) ? json(fit.objective) : json(nullptr);
  j["gamma_frozen"] = fit.gamma_frozen;
  j["polished"] = fit.polished;
  j["diagnostics"] = {{"admm_runs", fit.admm_runs},
                      {"admm_converged", fit.admm_converged},
                      {"descent_violations", fit.descent_violations},
                      {"objective_trace", seq(fit.objective_trace)},
                      {"primal_residual_trace", seq(fit.primal_residual_trace)}};
  if (!ids.empty()) j["ids"] = ids;
  return j.dump(2);
}

FitResult fit_from_json(const std::string& text, std::vector<std::string>* ids) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("fit JSON does not parse: ") + e.what());
  }
  FitResult f;
  try {
    if (j.value("schema_version", 0) != kSchemaVersion)
      throw Error(ErrorCode::InvalidSpec, "fit JSON has an unsupported schema_version");
    f.method = j.value("method", std::string("mdsp"));
    f.alpha = read_vec(j.at("alpha"));
    f.beta = read_mat(j.at("beta"));
    f.gamma = read_vec_list(j.at("gamma"));
    if (j.contains("assignment"))
      f.assignment.labels = j.at("assignment").get<std::vector<std::vector<int>>>();
    f.correlation = parse_correlation_kind(j.value("correlation", std::string("ind")));
    f.rho_hat = j.value("rho_hat", 0.0);
    f.lambda = j.value("lambda", 0.0);
    f.kappa = j.value("kappa", 1.0);
    f.iterations = j.value("iterations", 0);
    f.converged = j.value("converged", true);
    f.df = j.value("df", std::size_t{0});
    f.noise_variance = j.value("noise_variance", 0.0);
    f.objective = j.contains("objective") && !j["objective"].is_null() ? j["objective"].get<double>() : 0.0;
    f.gamma_frozen = j.value("gamma_frozen", false);
    f.polished = j.value("polished", false);
    if (ids && j.contains("ids")) *ids = j.at("ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("fit JSON field error: ") + e.what());
  }
  if (static_cast<std::size_t>(f.beta.cols()) != f.gamma.size() && f.beta.size() > 0)
    throw Error(ErrorCode::InvalidSpec, "fit JSON: gamma has " + std::to_string(f.gamma.size()) +
                                            " covariates, beta has " + std::to_string(f.beta.cols()));
  return f;
}

std::string coefficients_csv(const FitResult& fit, const std::vector<std::string>& ids) {
  std::ostringstream os;
  os << "id,covariate,beta,group_label\n";
  for (Eigen::Index i = 0; i < fit.beta.rows(); ++i)
    for (Eigen::Index k = 0; k < fit.beta.cols(); ++k) {
      const std::string id = static_cast<std::size_t>(i) < ids.size() ? ids[i] : std::to_string(i + 1);
      int label = SubgroupAssignment::kFreeLabel;
      if (static_cast<std::size_t>(k) < fit.assignment.labels.size())
        label = fit.assignment.labels[k][i];
      os << id << ',' << (k + 1) << ',' << num(fit.beta(i, k)) << ',' << label << '\n';
    }
  return os.str();
}

std::string tuning_report_to_json(const TuningReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["lambda_grid"] = seq(r.lambda_grid);
  j["gcv_values"] = seq(r.gcv_values);
  j["df_per_lambda"] = r.df_per_lambda;
  j["chosen_lambda"] = r.chosen_lambda;
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"lambda", f.lambda}, {"error", f.error}});
  j["failures"] = failures;
  json bic = json::array();
  for (const auto& per_k : r.bic_table) {
    json row = json::object();
    for (const auto& e : per_k) row[std::to_string(e.groups)] = {{"bic", e.bic}, {"rss", e.rss}};
    bic.push_back(row);
  }
  j["bic_table"] = bic;
  j["chosen_B"] = r.chosen_B;
  return j.dump(2);
}

std::string tuning_report_csv(const TuningReport& r) {
  std::ostringstream os;
  os << "lambda,df,gcv\n";
  for (std::size_t i = 0; i < r.lambda_grid.size(); ++i) {
    os << num(r.lambda_grid[i]) << ',';
    if (i < r.df_per_lambda.size()) os << r.df_per_lambda[i];
    os << ',';
    if (i < r.gcv_values.size() && std::isfinite(r.gcv_values[i])) os << num(r.gcv_values[i]);
    os << '\n';
  }
  return os.str();
}

ModelConfig parse_model_config(const std::string& text, ModelConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("config JSON does not parse: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, "config JSON must be an object");
  try {
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("kappa")) {
      if (j["kappa"].is_null()) c.kappa.reset();
      else c.kappa = j["kappa"].get<double>();
    }
    if (j.contains("correlation"))
      c.correlation = parse_correlation_kind(j["correlation"].get<std::string>());
    if (j.contains("rho")) {
      if (j["rho"].is_null()) c.fixed_rho.reset();
      else c.fixed_rho = j["rho"].get<double>();
    }
    if (j.contains("groups")) c.groups_per_covariate = j["groups"].get<std::vector<int>>();
    if (j.contains("sign_constraints")) {
      c.sign_constraints.clear();
      for (const auto& per_k : j["sign_constraints"]) {
        std::vector<SignConstraint> v;
        for (const auto& s : per_k) v.push_back(parse_sign(s.get<std::string>()));
        c.sign_constraints.push_back(std::move(v));
      }
    }
    c.eps_primal = j.value("eps_primal", c.eps_primal);
    c.eps_residual = j.value("eps_residual", c.eps_residual);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.gamma_grid_resolution = j.value("gamma_grid_resolution", c.gamma_grid_resolution);
    c.restarts = j.value("restarts", c.restarts);
    c.seed = j.value("seed", c.seed);
    c.polish = j.value("polish", c.polish);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("config JSON field error: ") + e.what());
  }
  return c;
}

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["lambda"] = c.lambda;
  j["kappa"] = c.kappa ? json(*c.kappa) : json(nullptr);
  j["correlation"] = to_string(c.correlation);
  j["rho"] = c.fixed_rho ? json(*c.fixed_rho) : json(nullptr);
  j["groups"] = c.groups_per_covariate;
  json sc = json::array();
  for (const auto& per_k : c.sign_constraints) {
    json v = json::array();
    for (auto s : per_k) v.push_back(sign_name(s));
    sc.push_back(v);
  }
  j["sign_constraints"] = sc;
  j["eps_primal"] = c.eps_primal;
  j["eps_residual"] = c.eps_residual;
  j["max_iterations"] = c.max_iterations;
  j["gamma_grid_resolution"] = c.gamma_grid_resolution;
  j["restarts"] = c.restarts;
  j["seed"] = c.seed;
  j["polish"] = c.polish;
  return j.dump(2);
}

}  // namespace mdsp
