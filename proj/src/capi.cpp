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
#include "mdsp/mdsp.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "mdsp/benchmark.hpp"
#include "mdsp/parallel.hpp"
#include "mdsp/serialize.hpp"
#include "mdsp/solver.hpp"
#include "mdsp/tuning.hpp"

struct mdsp_dataset {
  mdsp::LongitudinalDataset data;
};
struct mdsp_config {
  mdsp::ModelConfig config;
};
struct mdsp_fit {
  mdsp::FitResult fit;
  std::vector<std::string> ids;
};
struct mdsp_tuning {
  mdsp::TuningReport report;
  std::unique_ptr<mdsp_fit> fit;
};
struct mdsp_metrics {
  mdsp::MetricsTable table;
};

namespace {

thread_local std::string t_last_error;

mdsp_status to_status(mdsp::ErrorCode c) {
  using mdsp::ErrorCode;
  switch (c) {
    case ErrorCode::InvalidArgument: return MDSP_E_INVALID_ARGUMENT;
    case ErrorCode::Io: return MDSP_E_IO;
    case ErrorCode::MissingColumn: return MDSP_E_MISSING_COLUMN;
    case ErrorCode::UnbalancedPanel: return MDSP_E_UNBALANCED_PANEL;
    case ErrorCode::NonFiniteValue: return MDSP_E_NON_FINITE_VALUE;
    case ErrorCode::DuplicateId: return MDSP_E_DUPLICATE_ID;
    case ErrorCode::DegenerateCorrelation: return MDSP_E_DEGENERATE_CORRELATION;
    case ErrorCode::ZeroVariance: return MDSP_E_ZERO_VARIANCE;
    case ErrorCode::SingularSystem: return MDSP_E_SINGULAR_SYSTEM;
    case ErrorCode::DegenerateDf: return MDSP_E_DEGENERATE_DF;
    case ErrorCode::ShapeMismatch: return MDSP_E_SHAPE_MISMATCH;
    case ErrorCode::NoConvergence: return MDSP_E_NO_CONVERGENCE;
    case ErrorCode::InvalidSpec: return MDSP_E_INVALID_SPEC;
  }
  return MDSP_E_INTERNAL;
}

mdsp_status fail(mdsp_status s, std::string msg) {
  t_last_error = std::move(msg);
  return s;
}

// Runs `body` with every exception mapped to a status and message.
template <typename F>
mdsp_status guarded(F&& body) {
  t_last_error.clear();
  try {
    body();
    return MDSP_OK;
  } catch (const mdsp::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MDSP_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MDSP_E_INTERNAL, e.what());
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

#define MDSP_REQUIRE(cond, what)                                   \
  do {                                                             \
    if (!(cond)) return fail(MDSP_E_INVALID_ARGUMENT, what);       \
  } while (0)

mdsp::CsvSchema schema_from(const char* schema_json) {
  return schema_json ? mdsp::parse_schema_json(schema_json) : mdsp::CsvSchema{};
}

}  // namespace

extern "C" {

const char* mdsp_version(void) { return "0.1.0"; }

const char* mdsp_last_error(void) { return t_last_error.c_str(); }

const char* mdsp_status_name(mdsp_status s) {
  switch (s) {
    case MDSP_OK: return "Ok";
    case MDSP_E_INVALID_ARGUMENT: return "InvalidArgument";
    case MDSP_E_IO: return "Io";
    case MDSP_E_MISSING_COLUMN: return "MissingColumn";
    case MDSP_E_UNBALANCED_PANEL: return "UnbalancedPanel";
    case MDSP_E_NON_FINITE_VALUE: return "NonFiniteValue";
    case MDSP_E_DUPLICATE_ID: return "DuplicateId";
    case MDSP_E_DEGENERATE_CORRELATION: return "DegenerateCorrelation";
    case MDSP_E_ZERO_VARIANCE: return "ZeroVariance";
    case MDSP_E_SINGULAR_SYSTEM: return "SingularSystem";
    case MDSP_E_DEGENERATE_DF: return "DegenerateDf";
    case MDSP_E_SHAPE_MISMATCH: return "ShapeMismatch";
    case MDSP_E_NO_CONVERGENCE: return "NoConvergence";
    case MDSP_E_INVALID_SPEC: return "InvalidSpec";
    case MDSP_E_INTERNAL: return "Internal";
  }
  return "Unknown";
}

void mdsp_string_free(char* s) { std::free(s); }

void mdsp_set_threads(unsigned threads) { mdsp::set_thread_count(threads); }

// ---- datasets

mdsp_status mdsp_dataset_load_csv(const char* path, const char* schema_json, mdsp_dataset** out) {
  MDSP_REQUIRE(path && out, "path and out must be non-null");
  *out = nullptr;
  return guarded([&] { *out = new mdsp_dataset{mdsp::load_dataset(path, schema_from(schema_json))}; });
}

mdsp_status mdsp_dataset_parse_csv(const char* text, const char* schema_json, mdsp_dataset** out) {
  MDSP_REQUIRE(text && out, "text and out must be non-null");
  *out = nullptr;
  return guarded(
      [&] { *out = new mdsp_dataset{mdsp::parse_dataset_csv(text, schema_from(schema_json))}; });
}

mdsp_status mdsp_dataset_from_arrays(size_t n, size_t m, size_t p, size_t q, const double* y,
                                     const double* x, const double* z, mdsp_dataset** out) {
  MDSP_REQUIRE(out, "out must be non-null");
  MDSP_REQUIRE(y && x && (z || q == 0), "data arrays must be non-null");
  *out = nullptr;
  return guarded([&] {
    const std::size_t rows = n * m;
    mdsp::LongitudinalDataset d(n, m, p, q, std::vector<double>(y, y + rows),
                                std::vector<double>(x, x + rows * p),
                                q ? std::vector<double>(z, z + rows * q) : std::vector<double>{});
    const auto violations = mdsp::validate(d);
    if (!violations.empty())
      throw mdsp::Error(mdsp::ErrorCode::InvalidArgument,
                        violations.front().invariant + " at " + violations.front().location);
    *out = new mdsp_dataset{std::move(d)};
  });
}

mdsp_status mdsp_dataset_shape(const mdsp_dataset* d, size_t* n, size_t* m, size_t* p, size_t* q) {
  MDSP_REQUIRE(d, "dataset must be non-null");
  if (n) *n = d->data.n_individuals();
  if (m) *m = d->data.measurements();
  if (p) *p = d->data.p();
  if (q) *q = d->data.q();
  return MDSP_OK;
}

void mdsp_dataset_free(mdsp_dataset* d) { delete d; }

// ---- configuration

mdsp_status mdsp_config_new(mdsp_config** out) {
  MDSP_REQUIRE(out, "out must be non-null");
  return guarded([&] { *out = new mdsp_config{}; });
}

mdsp_status mdsp_config_from_json(const char* json, mdsp_config** out) {
  MDSP_REQUIRE(json && out, "json and out must be non-null");
  *out = nullptr;
  return guarded([&] { *out = new mdsp_config{mdsp::parse_model_config(json)}; });
}

mdsp_status mdsp_config_set_lambda(mdsp_config* c, double lambda) {
  MDSP_REQUIRE(c, "config must be non-null");
  MDSP_REQUIRE(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  c->config.lambda = lambda;
  return MDSP_OK;
}

mdsp_status mdsp_config_set_kappa(mdsp_config* c, double kappa) {
  MDSP_REQUIRE(c, "config must be non-null");
  MDSP_REQUIRE(kappa > 0.0 && std::isfinite(kappa), "kappa must be finite and > 0");
  c->config.kappa = kappa;
  return MDSP_OK;
}

mdsp_status mdsp_config_set_correlation(mdsp_config* c, const char* kind) {
  MDSP_REQUIRE(c && kind, "config and kind must be non-null");
  return guarded([&] { c->config.correlation = mdsp::parse_correlation_kind(kind); });
}

mdsp_status mdsp_config_set_groups(mdsp_config* c, size_t k, int groups) {
  MDSP_REQUIRE(c, "config must be non-null");
  MDSP_REQUIRE(groups >= 1, "groups must be >= 1");
  return guarded([&] {
    auto& g = c->config.groups_per_covariate;
    if (g.size() <= k) g.resize(k + 1, 2);
    g[k] = groups;
  });
}

mdsp_status mdsp_config_set_seed(mdsp_config* c, uint64_t seed) {
  MDSP_REQUIRE(c, "config must be non-null");
  c->config.seed = seed;
  return MDSP_OK;
}

mdsp_status mdsp_config_to_json(const mdsp_config* c, char** out) {
  MDSP_REQUIRE(c && out, "config and out must be non-null");
  return guarded([&] { *out = dup(mdsp::model_config_to_json(c->config)); });
}

void mdsp_config_free(mdsp_config* c) { delete c; }

// ---- fitting

namespace {

// A covariate count that the config does not cover falls back to B=2.
mdsp::ModelConfig config_for(const mdsp_config* c, std::size_t p) {
  mdsp::ModelConfig cfg = c ? c->config : mdsp::ModelConfig{};
  if (!cfg.groups_per_covariate.empty() && cfg.groups_per_covariate.size() < p)
    cfg.groups_per_covariate.resize(p, 2);
  return cfg;
}

}  // namespace

mdsp_status mdsp_fit_run(const mdsp_dataset* d, const mdsp_config* c, mdsp_fit** out) {
  MDSP_REQUIRE(d && out, "dataset and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    const auto cfg = config_for(c, d->data.p());
    *out = new mdsp_fit{mdsp::fit_mdsp(d->data, cfg), d->data.ids()};
  });
}

mdsp_status mdsp_fit_load_json(const char* json, mdsp_fit** out) {
  MDSP_REQUIRE(json && out, "json and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    auto f = std::make_unique<mdsp_fit>();
    f->fit = mdsp::fit_from_json(json, &f->ids);
    *out = f.release();
  });
}

mdsp_status mdsp_fit_to_json(const mdsp_fit* f, char** out) {
  MDSP_REQUIRE(f && out, "fit and out must be non-null");
  return guarded([&] { *out = dup(mdsp::fit_to_json(f->fit, f->ids)); });
}

mdsp_status mdsp_fit_coefficients_csv(const mdsp_fit* f, char** out) {
  MDSP_REQUIRE(f && out, "fit and out must be non-null");
  return guarded([&] { *out = dup(mdsp::coefficients_csv(f->fit, f->ids)); });
}

mdsp_status mdsp_fit_shape(const mdsp_fit* f, size_t* n, size_t* p, size_t* q) {
  MDSP_REQUIRE(f, "fit must be non-null");
  if (n) *n = static_cast<size_t>(f->fit.beta.rows());
  if (p) *p = static_cast<size_t>(f->fit.beta.cols());
  if (q) *q = static_cast<size_t>(f->fit.alpha.size());
  return MDSP_OK;
}

mdsp_status mdsp_fit_beta(const mdsp_fit* f, double* beta) {
  MDSP_REQUIRE(f && beta, "fit and beta must be non-null");
  const auto& b = f->fit.beta;
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index k = 0; k < b.cols(); ++k) beta[i * b.cols() + k] = b(i, k);
  return MDSP_OK;
}

mdsp_status mdsp_fit_alpha(const mdsp_fit* f, double* alpha) {
  MDSP_REQUIRE(f && (alpha || f->fit.alpha.size() == 0), "fit and alpha must be non-null");
  for (Eigen::Index j = 0; j < f->fit.alpha.size(); ++j) alpha[j] = f->fit.alpha(j);
  return MDSP_OK;
}

mdsp_status mdsp_fit_summary(const mdsp_fit* f, double* lambda, int* converged, int* iterations,
                             size_t* df) {
  MDSP_REQUIRE(f, "fit must be non-null");
  if (lambda) *lambda = f->fit.lambda;
  if (converged) *converged = f->fit.converged ? 1 : 0;
  if (iterations) *iterations = f->fit.iterations;
  if (df) *df = f->fit.df;
  return MDSP_OK;
}

mdsp_status mdsp_fit_trace(const mdsp_fit* f, size_t* length, const double** objective,
                           const double** primal_residual) {
  MDSP_REQUIRE(f && length, "fit and length must be non-null");
  *length = f->fit.objective_trace.size();
  if (objective) *objective = f->fit.objective_trace.data();
  if (primal_residual) *primal_residual = f->fit.primal_residual_trace.data();
  return MDSP_OK;
}

void mdsp_fit_free(mdsp_fit* f) { delete f; }

// ---- tuning

mdsp_status mdsp_tune(const mdsp_dataset* d, const mdsp_config* c, const double* grid,
                      size_t grid_length, mdsp_tuning** out) {
  MDSP_REQUIRE(d && out, "dataset and out must be non-null");
  MDSP_REQUIRE(grid || grid_length == 0, "grid is null but grid_length > 0");
  *out = nullptr;
  return guarded([&] {
    const auto cfg = config_for(c, d->data.p());
    std::vector<double> g(grid, grid + grid_length);
    auto outcome = mdsp::select_lambda(d->data, cfg, std::move(g));
    auto t = std::make_unique<mdsp_tuning>();
    t->report = std::move(outcome.report);
    t->fit = std::make_unique<mdsp_fit>(mdsp_fit{std::move(outcome.fit), d->data.ids()});
    *out = t.release();
  });
}

mdsp_status mdsp_select_groups(const mdsp_dataset* d, const mdsp_config* c, int min_groups,
                               int max_groups, mdsp_tuning** out) {
  MDSP_REQUIRE(d && out, "dataset and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    const auto cfg = config_for(c, d->data.p());
    auto t = std::make_unique<mdsp_tuning>();
    t->report = mdsp::select_group_numbers(d->data, cfg, min_groups, max_groups);
    *out = t.release();
  });
}

mdsp_status mdsp_tuning_to_json(const mdsp_tuning* t, char** out) {
  MDSP_REQUIRE(t && out, "tuning and out must be non-null");
  return guarded([&] { *out = dup(mdsp::tuning_report_to_json(t->report)); });
}

mdsp_status mdsp_tuning_csv(const mdsp_tuning* t, char** out) {
  MDSP_REQUIRE(t && out, "tuning and out must be non-null");
  return guarded([&] { *out = dup(mdsp::tuning_report_csv(t->report)); });
}

mdsp_status mdsp_tuning_chosen_lambda(const mdsp_tuning* t, double* lambda) {
  MDSP_REQUIRE(t && lambda, "tuning and lambda must be non-null");
  *lambda = t->report.chosen_lambda;
  return MDSP_OK;
}

mdsp_status mdsp_tuning_chosen_groups(const mdsp_tuning* t, int* chosen_B, size_t p) {
  MDSP_REQUIRE(t && chosen_B, "tuning and chosen_B must be non-null");
  MDSP_REQUIRE(t->report.chosen_B.size() == p, "report does not hold p group numbers");
  for (size_t k = 0; k < p; ++k) chosen_B[k] = t->report.chosen_B[k];
  return MDSP_OK;
}

mdsp_status mdsp_tuning_fit(const mdsp_tuning* t, mdsp_fit** out) {
  MDSP_REQUIRE(t && out, "tuning and out must be non-null");
  MDSP_REQUIRE(t->fit, "this report carries no fit");
  return guarded([&] { *out = new mdsp_fit(*t->fit); });
}

void mdsp_tuning_free(mdsp_tuning* t) { delete t; }

// ---- new individuals

mdsp_status mdsp_predict_new(const mdsp_fit* trained, const mdsp_dataset* new_data,
                             const mdsp_config* c, int has_lambda, double lambda_star,
                             char** out_csv, int* all_converged) {
  MDSP_REQUIRE(trained && new_data && out_csv, "trained, new_data and out_csv must be non-null");
  return guarded([&] {
    const auto& d = new_data->data;
    const auto& gamma = trained->fit.gamma;
    if (gamma.size() != d.p())
      throw mdsp::Error(mdsp::ErrorCode::ShapeMismatch,
                        "trained fit has " + std::to_string(gamma.size()) +
                            " covariates but the new data has " + std::to_string(d.p()));
    mdsp::ModelConfig cfg = c ? c->config : mdsp::ModelConfig{};
    // The training penalty carries over: both objectives charge lambda per coefficient.
    std::optional<double> lambda = trained->fit.lambda;
    if (has_lambda) lambda = lambda_star;
    std::ostringstream os;
    os << "id,covariate,beta,group_label,selected\n";
    bool converged = true;
    for (std::size_t i = 0; i < d.n_individuals(); ++i) {
      const mdsp::RowMajorMatrix x = d.x(i), z = d.z(i);
      const auto f = mdsp::fit_semi_new(d.y(i), x, z, gamma, lambda, cfg);
      converged = converged && f.converged;
      for (std::size_t k = 0; k < d.p(); ++k) {
        const double b = f.beta(0, static_cast<Eigen::Index>(k));
        os << d.ids()[i] << ',' << (k + 1) << ',';
        std::ostringstream v;
        v.precision(17);
        v << b;
        os << v.str() << ',' << f.assignment.labels[k][0] << ',' << (b != 0.0 ? 1 : 0) << '\n';
      }
    }
    *out_csv = dup(os.str());
    if (all_converged) *all_converged = converged ? 1 : 0;
  });
}

// ---- benchmarks

mdsp_status mdsp_bench_run(const char* spec_json, mdsp_metrics** out) {
  MDSP_REQUIRE(spec_json && out, "spec_json and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    const auto spec = mdsp::parse_experiment_spec(spec_json);
    *out = new mdsp_metrics{mdsp::run(spec)};
  });
}

mdsp_status mdsp_bench_preset(const char* table, int replications, uint64_t seed,
                              mdsp_metrics** out) {
  MDSP_REQUIRE(table && out, "table and out must be non-null");
  MDSP_REQUIRE(replications >= 1, "replications must be >= 1");
  *out = nullptr;
  return guarded([&] {
    auto m = std::make_unique<mdsp_metrics>();
    for (const auto& spec : mdsp::paper_preset(table, replications, seed)) {
      auto t = mdsp::run(spec);
      m->table.rows.insert(m->table.rows.end(), t.rows.begin(), t.rows.end());
      m->table.runs.insert(m->table.runs.end(), t.runs.begin(), t.runs.end());
    }
    *out = m.release();
  });
}

mdsp_status mdsp_metrics_csv(const mdsp_metrics* m, char** out) {
  MDSP_REQUIRE(m && out, "metrics and out must be non-null");
  return guarded([&] { *out = dup(m->table.to_csv()); });
}

mdsp_status mdsp_metrics_text(const mdsp_metrics* m, char** out) {
  MDSP_REQUIRE(m && out, "metrics and out must be non-null");
  return guarded([&] { *out = dup(m->table.to_text()); });
}

mdsp_status mdsp_metrics_raw_csv(const mdsp_metrics* m, char** out) {
  MDSP_REQUIRE(m && out, "metrics and out must be non-null");
  return guarded([&] { *out = dup(m->table.raw_csv()); });
}

mdsp_status mdsp_metrics_invalid_cells(const mdsp_metrics* m, size_t* count) {
  MDSP_REQUIRE(m && count, "metrics and count must be non-null");
  *count = 0;
  for (const auto& r : m->table.rows) *count += r.valid ? 0 : 1;
  return MDSP_OK;
}

void mdsp_metrics_free(mdsp_metrics* m) { delete m; }

}  // extern "C"
