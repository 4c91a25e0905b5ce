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

// mdsp command-line tool. Everything goes through the C interface.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdsp/mdsp.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kSchemaVersion = 1;

struct Failure {
  mdsp_status status;
  std::string message;
};

void check(mdsp_status s) {
  if (s != MDSP_OK) throw Failure{s, mdsp_last_error()};
}

// Owning wrappers for C handles and strings.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};
using Dataset = Handle<mdsp_dataset, mdsp_dataset_free>;
using Config = Handle<mdsp_config, mdsp_config_free>;
using Fit = Handle<mdsp_fit, mdsp_fit_free>;
using Tuning = Handle<mdsp_tuning, mdsp_tuning_free>;
using Metrics = Handle<mdsp_metrics, mdsp_metrics_free>;

std::string take(char* s) {
  std::string out = s ? s : "";
  mdsp_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{MDSP_E_IO, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{MDSP_E_IO, "cannot write " + path.string()};
  out << text;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Line-delimited JSON run log.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {}
  void event(json e) {
    e["schema_version"] = kSchemaVersion;
    e["timestamp"] = timestamp();
    out_ << e.dump() << '\n';
    out_.flush();
  }
  void iterations(const mdsp_fit* fit) {
    size_t n = 0;
    const double* obj = nullptr;
    const double* res = nullptr;
    check(mdsp_fit_trace(fit, &n, &obj, &res));
    for (size_t i = 0; i < n; ++i)
      event({{"event", "iteration"}, {"iteration", i + 1}, {"objective", obj[i]},
             {"primal_residual", res[i]}});
  }

 private:
  std::ofstream out_;
};

struct Common {
  std::string data;
  std::string schema;
  std::string config;
  std::string out = "mdsp_out";
  std::optional<double> lambda;
  std::optional<double> kappa;
  std::string corr;
  std::vector<std::string> groups;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

void add_model_flags(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON model config; flags override it");
  app->add_option("--lambda", c.lambda, "Penalty level (omitted: tuned by GCV)");
  app->add_option("--kappa", c.kappa, "ADMM augmentation (omitted: data-scaled default)");
  app->add_option("--corr", c.corr, "Working correlation")->check(CLI::IsMember({"ind", "exch", "ar1"}));
  app->add_option("--groups", c.groups, "Groups per covariate as k=B (k from 1)");
  app->add_option("--seed", c.seed, "Seed for random restarts");
}

void add_io_flags(CLI::App* app, Common& c, bool data_required = true) {
  auto* d = app->add_option("--data", c.data, "Longitudinal CSV (id,time,y,x*,z*)");
  if (data_required) d->required();
  app->add_option("--schema", c.schema, "JSON column mapping");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

void build_config(const Common& c, Config& cfg) {
  if (!c.config.empty()) check(mdsp_config_from_json(read_file(c.config).c_str(), cfg.out()));
  else check(mdsp_config_new(cfg.out()));
  if (c.lambda) check(mdsp_config_set_lambda(cfg.get(), *c.lambda));
  if (c.kappa) check(mdsp_config_set_kappa(cfg.get(), *c.kappa));
  if (!c.corr.empty()) check(mdsp_config_set_correlation(cfg.get(), c.corr.c_str()));
  if (c.seed) check(mdsp_config_set_seed(cfg.get(), *c.seed));
  for (const auto& g : c.groups) {
    const auto eq = g.find('=');
    std::size_t k = 0;
    int b = 0;
    try {
      if (eq == std::string::npos) throw std::invalid_argument(g);
      k = std::stoul(g.substr(0, eq));
      b = std::stoi(g.substr(eq + 1));
    } catch (const std::exception&) {
      throw Failure{MDSP_E_INVALID_ARGUMENT, "--groups expects k=B, got '" + g + "'"};
    }
    if (k < 1) throw Failure{MDSP_E_INVALID_ARGUMENT, "--groups covariate index starts at 1"};
    check(mdsp_config_set_groups(cfg.get(), k - 1, b));
  }
}

void load_data(const Common& c, Dataset& d) {
  std::string schema;
  if (!c.schema.empty()) schema = read_file(c.schema);
  check(mdsp_dataset_load_csv(c.data.c_str(), schema.empty() ? nullptr : schema.c_str(), d.out()));
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{MDSP_E_IO, "cannot create output directory " + dir + ": " + ec.message()};
  return fs::path(dir);
}

int write_fit(const fs::path& out, const mdsp_fit* fit, RunLog& log) {
  char* s = nullptr;
  check(mdsp_fit_to_json(fit, &s));
  write_file(out / "fit.json", take(s));
  check(mdsp_fit_coefficients_csv(fit, &s));
  write_file(out / "coefficients.csv", take(s));
  log.iterations(fit);
  double lambda = 0;
  int converged = 0, iterations = 0;
  size_t df = 0;
  check(mdsp_fit_summary(fit, &lambda, &converged, &iterations, &df));
  log.event({{"event", "done"}, {"lambda", lambda}, {"converged", converged != 0},
             {"iterations", iterations}, {"df", df}});
  if (!converged) {
    std::cerr << "warning: ADMM reached max_iterations; partial output written\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

int cmd_fit(const Common& c) {
  const auto out = prepare_out(c.out);
  RunLog log(out / "run.jsonl");
  log.event({{"event", "start"}, {"command", "fit"}, {"data", c.data}});
  Dataset d;
  load_data(c, d);
  Config cfg;
  build_config(c, cfg);
  Fit fit;
  if (c.lambda || !c.config.empty() && json::parse(read_file(c.config)).contains("lambda")) {
    check(mdsp_fit_run(d.get(), cfg.get(), fit.out()));
  } else {
    Tuning t;
    check(mdsp_tune(d.get(), cfg.get(), nullptr, 0, t.out()));
    double chosen = 0;
    check(mdsp_tuning_chosen_lambda(t.get(), &chosen));
    log.event({{"event", "tuned"}, {"lambda", chosen}});
    char* s = nullptr;
    check(mdsp_tuning_to_json(t.get(), &s));
    write_file(out / "tuning.json", take(s));
    check(mdsp_tuning_fit(t.get(), fit.out()));
  }
  return write_fit(out, fit.get(), log);
}

int cmd_tune(const Common& c, const std::vector<double>& grid) {
  const auto out = prepare_out(c.out);
  RunLog log(out / "run.jsonl");
  log.event({{"event", "start"}, {"command", "tune"}, {"data", c.data}});
  Dataset d;
  load_data(c, d);
  Config cfg;
  build_config(c, cfg);
  Tuning t;
  check(mdsp_tune(d.get(), cfg.get(), grid.empty() ? nullptr : grid.data(), grid.size(), t.out()));
  char* s = nullptr;
  check(mdsp_tuning_to_json(t.get(), &s));
  write_file(out / "tuning.json", take(s));
  check(mdsp_tuning_csv(t.get(), &s));
  write_file(out / "tuning.csv", take(s));
  double chosen = 0;
  check(mdsp_tuning_chosen_lambda(t.get(), &chosen));
  log.event({{"event", "tuned"}, {"lambda", chosen}});
  Fit fit;
  check(mdsp_tuning_fit(t.get(), fit.out()));
  return write_fit(out, fit.get(), log);
}

int cmd_select_groups(const Common& c, int min_groups, int max_groups) {
  const auto out = prepare_out(c.out);
  Dataset d;
  load_data(c, d);
  Config cfg;
  build_config(c, cfg);
  Tuning t;
  check(mdsp_select_groups(d.get(), cfg.get(), min_groups, max_groups, t.out()));
  char* s = nullptr;
  check(mdsp_tuning_to_json(t.get(), &s));
  const std::string report = take(s);
  write_file(out / "groups.json", report);
  const auto j = json::parse(report);
  std::cout << "chosen B per covariate:";
  for (int b : j["chosen_B"]) std::cout << ' ' << b;
  std::cout << '\n';
  return kExitOk;
}

int cmd_predict_new(const Common& c, const std::string& model, std::optional<double> lambda_star) {
  const auto out = prepare_out(c.out);
  Fit trained;
  check(mdsp_fit_load_json(read_file(model).c_str(), trained.out()));
  Dataset d;
  load_data(c, d);
  Config cfg;
  build_config(c, cfg);
  char* s = nullptr;
  int converged = 1;
  check(mdsp_predict_new(trained.get(), d.get(), cfg.get(), lambda_star ? 1 : 0,
                         lambda_star.value_or(0.0), &s, &converged));
  write_file(out / "predictions.csv", take(s));
  return converged ? kExitOk : kExitNoConvergence;
}

int cmd_bench(const Common& c, const std::string& spec, const std::string& table, int reps,
              std::uint64_t seed) {
  const auto out = prepare_out(c.out);
  Metrics m;
  if (!table.empty()) {
    check(mdsp_bench_preset(table.c_str(), reps, seed, m.out()));
  } else {
    if (spec.empty()) throw Failure{MDSP_E_INVALID_ARGUMENT, "bench needs --spec or --paper-table"};
    auto j = json::parse(read_file(spec), nullptr, false);
    if (j.is_discarded()) throw Failure{MDSP_E_INVALID_SPEC, "spec is not valid JSON"};
    if (reps > 0) j["n_replications"] = reps;
    if (c.seed) j["seed"] = *c.seed;
    check(mdsp_bench_run(j.dump().c_str(), m.out()));
  }
  char* s = nullptr;
  check(mdsp_metrics_csv(m.get(), &s));
  write_file(out / "metrics.csv", take(s));
  check(mdsp_metrics_raw_csv(m.get(), &s));
  write_file(out / "raw.csv", take(s));
  check(mdsp_metrics_text(m.get(), &s));
  const std::string text = take(s);
  write_file(out / "metrics.txt", text);
  std::cout << text;
  size_t invalid = 0;
  check(mdsp_metrics_invalid_cells(m.get(), &invalid));
  if (invalid) std::cerr << "warning: " << invalid << " cell(s) exceeded the 5% failure limit\n";
  return kExitOk;
}

void report_failure(const Failure& f, const std::string& out_dir) {
  const json record{{"schema_version", kSchemaVersion},
                    {"error", mdsp_status_name(f.status)},
                    {"code", static_cast<int>(f.status)},
                    {"message", f.message}};
  std::cerr << record.dump() << '\n';
  std::error_code ec;
  if (!out_dir.empty() && fs::is_directory(out_dir, ec)) {
    std::ofstream e(fs::path(out_dir) / "error.json");
    e << record.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Individualized variable selection with the multi-directional separation penalty"};
  app.require_subcommand(1);
  Common c;

  auto* fit = app.add_subcommand("fit", "Fit MDSP at --lambda, or tune it when omitted");
  add_io_flags(fit, c);
  add_model_flags(fit, c);

  std::vector<double> grid;
  auto* tune = app.add_subcommand("tune", "Select lambda by GCV");
  add_io_flags(tune, c);
  add_model_flags(tune, c);
  tune->add_option("--grid", grid, "Ascending lambda grid (default: 30 log-spaced points)");

  int min_groups = 1, max_groups = 5;
  auto* groups = app.add_subcommand("select-groups", "Choose B_k per covariate by modified BIC");
  add_io_flags(groups, c);
  add_model_flags(groups, c);
  groups->add_option("--min", min_groups, "Smallest B_k");
  groups->add_option("--max", max_groups, "Largest B_k");

  std::string model;
  std::optional<double> lambda_star;
  auto* predict = app.add_subcommand("predict-new", "Fit new individuals with trained directions");
  add_io_flags(predict, c);
  add_model_flags(predict, c);
  predict->add_option("--model", model, "fit.json from a training run")->required();
  predict->add_option("--lambda-star", lambda_star, "Penalty for the new fits (omitted: the trained lambda)");

  std::string spec, table;
  int reps = 0;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Run a simulation experiment");
  add_io_flags(bench, c, false);
  bench->add_option("--spec", spec, "ExperimentSpec JSON");
  bench->add_option("--paper-table", table, "Preset reproduction")
      ->check(CLI::IsMember({"1", "2", "3", "semi-new"}));
  bench->add_option("--reps", reps, "Replications (default: 100, or the spec's value)");
  bench->add_option("--seed", c.seed, "Master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; every usage error is an input error.
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }
  mdsp_set_threads(c.threads);
  try {
    if (*fit) return cmd_fit(c);
    if (*tune) return cmd_tune(c, grid);
    if (*groups) return cmd_select_groups(c, min_groups, max_groups);
    if (*predict) return cmd_predict_new(c, model, lambda_star);
    if (*bench) {
      bench_seed = c.seed.value_or(0);
      return cmd_bench(c, spec, table, table.empty() ? reps : (reps > 0 ? reps : 100), bench_seed);
    }
  } catch (const Failure& f) {
    report_failure(f, c.out);
    return kExitError;
  } catch (const std::exception& e) {
    report_failure({MDSP_E_INTERNAL, e.what()}, c.out);
    return kExitError;
  }
  return kExitError;
}
