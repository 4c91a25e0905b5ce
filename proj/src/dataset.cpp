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
#include "mdsp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace mdsp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DegenerateCorrelation: return "DegenerateCorrelation";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::DegenerateDf: return "DegenerateDf";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
  }
  return "Unknown";
}

LongitudinalDataset::LongitudinalDataset(std::size_t n, std::size_t m,
                                         std::size_t p, std::size_t q,
                                         std::vector<double> y,
                                         std::vector<double> x,
                                         std::vector<double> z,
                                         std::vector<std::string> ids)
    : n_(n), m_(m), p_(p), q_(q), y_(std::move(y)), x_(std::move(x)),
      z_(std::move(z)), ids_(std::move(ids)) {
  if (y_.size() != n * m || x_.size() != n * m * p || z_.size() != n * m * q)
    throw Error(ErrorCode::ShapeMismatch,
                "dataset arrays do not match N=" + std::to_string(n) +
                    ", m=" + std::to_string(m) + ", p=" + std::to_string(p) +
                    ", q=" + std::to_string(q));
  if (ids_.empty()) {
    ids_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids_.push_back(std::to_string(i + 1));
  }
  if (ids_.size() != n)
    throw Error(ErrorCode::ShapeMismatch, "individual_ids length != N");
}

LongitudinalDataset LongitudinalDataset::subset(
    const std::vector<std::size_t>& order) const {
  std::vector<double> y, x, z;
  std::vector<std::string> ids;
  y.reserve(order.size() * m_);
  x.reserve(order.size() * m_ * p_);
  z.reserve(order.size() * m_ * q_);
  for (std::size_t i : order) {
    if (i >= n_) throw Error(ErrorCode::InvalidArgument, "subset index out of range");
    y.insert(y.end(), y_.begin() + i * m_, y_.begin() + (i + 1) * m_);
    x.insert(x.end(), x_.begin() + i * m_ * p_, x_.begin() + (i + 1) * m_ * p_);
    z.insert(z.end(), z_.begin() + i * m_ * q_, z_.begin() + (i + 1) * m_ * q_);
    ids.push_back(ids_[i]);
  }
  return {order.size(), m_, p_, q_, std::move(y), std::move(x), std::move(z),
          std::move(ids)};
}

std::string to_string(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::independence: return "ind";
    case CorrelationKind::exchangeable: return "exch";
    case CorrelationKind::ar1: return "ar1";
  }
  return "ind";
}

CorrelationKind parse_correlation_kind(const std::string& text) {
  if (text == "ind" || text == "independence") return CorrelationKind::independence;
  if (text == "exch" || text == "exchangeable") return CorrelationKind::exchangeable;
  if (text == "ar1" || text == "ar-1" || text == "AR1") return CorrelationKind::ar1;
  throw Error(ErrorCode::InvalidArgument,
              "unknown correlation kind '" + text + "' (expected ind, exch, ar1)");
}

int ModelConfig::groups_for(std::size_t k) const {
  if (groups_per_covariate.empty()) return 2;
  return groups_per_covariate.at(k);
}

std::vector<SignConstraint> ModelConfig::constraints_for(std::size_t k) const {
  if (k < sign_constraints.size() && !sign_constraints[k].empty())
    return sign_constraints[k];
  return std::vector<SignConstraint>(groups_for(k) - 1, SignConstraint::free);
}

void ModelConfig::validate(std::size_t p) const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::InvalidArgument, msg);
  };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
  if (kappa && (!(*kappa > 0.0) || !std::isfinite(*kappa))) fail("kappa must be > 0");
  if (!(eps_primal > 0.0) || !(eps_residual > 0.0)) fail("tolerances must be > 0");
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (restarts < 0) fail("restarts must be >= 0");
  if (!groups_per_covariate.empty() && groups_per_covariate.size() != p)
    fail("groups_per_covariate must have one entry per covariate");
  for (int b : groups_per_covariate)
    if (b < 2) fail("every B_k must be >= 2");
  if (sign_constraints.size() > p) fail("more sign constraints than covariates");
  for (std::size_t k = 0; k < sign_constraints.size(); ++k) {
    const auto& c = sign_constraints[k];
    if (c.empty()) continue;
    if (static_cast<int>(c.size()) != groups_for(k) - 1)
      fail("sign constraints for covariate " + std::to_string(k + 1) +
           " must have B_k - 1 entries");
    // Two groups held to the same strict sign can never be told apart.
    int pos = 0, neg = 0;
    for (auto s : c) {
      pos += s == SignConstraint::positive;
      neg += s == SignConstraint::negative;
    }
    if (pos > 1 || neg > 1)
      fail("covariate " + std::to_string(k + 1) +
           " has two groups with the same strict sign requirement");
  }
  if (fixed_rho && !std::isfinite(*fixed_rho)) fail("fixed_rho must be finite");
}

bool CoefficientState::all_finite() const {
  auto finite = [](const auto& m) { return m.allFinite(); };
  if (!finite(alpha) || !finite(beta) || !finite(nu) || !finite(dual)) return false;
  for (const auto& g : gamma)
    if (!g.allFinite()) return false;
  return true;
}

std::vector<Violation> validate(const LongitudinalDataset& d) {
  std::vector<Violation> out;
  if (d.n_individuals() < 1) out.push_back({"N >= 1", "dataset"});
  if (d.measurements() < 2) out.push_back({"m >= 2", "dataset"});
  if (d.p() < 1) out.push_back({"p >= 1", "dataset"});
  const std::size_t m = d.measurements();
  auto scan = [&](const std::vector<double>& v, std::size_t width,
                  const char* name) {
    for (std::size_t idx = 0; idx < v.size(); ++idx) {
      if (std::isfinite(v[idx])) continue;
      const std::size_t row = width == 0 ? 0 : idx / width;
      std::ostringstream loc;
      loc << name << "[individual " << row / m + 1 << ", t " << row % m + 1;
      if (width > 1) loc << ", column " << idx % width + 1;
      loc << "]";
      out.push_back({"NonFiniteValue", loc.str()});
    }
  };
  scan(d.y_data(), 1, "y");
  scan(d.x_data(), d.p(), "X");
  scan(d.z_data(), d.q(), "Z");
  std::unordered_set<std::string> seen;
  for (const auto& id : d.ids())
    if (!seen.insert(id).second) out.push_back({"DuplicateId", "id " + id});
  return out;
}

CsvSchema parse_schema_json(const std::string& json_text) {
  CsvSchema s;
  const auto j = nlohmann::json::parse(json_text);
  if (j.contains("id")) s.id = j.at("id").get<std::string>();
  if (j.contains("time")) s.time = j.at("time").get<std::string>();
  if (j.contains("y")) s.y = j.at("y").get<std::string>();
  if (j.contains("x")) s.x = j.at("x").get<std::vector<std::string>>();
  if (j.contains("z")) s.z = j.at("z").get<std::vector<std::string>>();
  return s;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

// Accepts NaN/Inf spellings so they reach the finiteness check.
std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

struct Row {
  std::size_t line;
  double time;
  double y;
  std::vector<double> x;
  std::vector<double> z;
};

}  // namespace

LongitudinalDataset parse_dataset_csv(const std::string& text,
                                      const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::InvalidArgument, "empty CSV input");
  if (header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw Error(ErrorCode::MissingColumn, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  auto matching = [&](const std::regex& re) {
    std::vector<std::string> names;
    for (const auto& h : header)
      if (std::regex_match(h, re)) names.push_back(h);
    return names;
  };
  const std::size_t id_col = column(schema.id);
  const std::size_t time_col = column(schema.time);
  const std::size_t y_col = column(schema.y);
  std::vector<std::string> x_names =
      schema.x.empty() ? matching(std::regex("x[0-9]+")) : schema.x;
  std::vector<std::string> z_names =
      schema.z.empty() ? matching(std::regex("z[0-9]+")) : schema.z;
  if (x_names.empty())
    throw Error(ErrorCode::MissingColumn, "missing heterogeneous covariate columns x1..xp");
  std::vector<std::size_t> x_cols, z_cols;
  for (const auto& n : x_names) x_cols.push_back(column(n));
  for (const auto& n : z_names) z_cols.push_back(column(n));

  std::vector<std::string> id_order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  auto field = [&](const std::vector<std::string>& f, std::size_t col,
                   const std::string& name) {
    const auto v = parse_number(f[col]);
    if (!v)
      throw Error(ErrorCode::InvalidArgument,
                  "row " + std::to_string(line_no) + ", column '" + name +
                      "': cannot parse '" + f[col] + "'");
    if (!std::isfinite(*v))
      throw Error(ErrorCode::NonFiniteValue,
                  "row " + std::to_string(line_no) + ", column '" + name +
                      "': non-finite value '" + f[col] + "'");
    return *v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw Error(ErrorCode::InvalidArgument,
                  "row " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(f.size()));
    Row r{line_no, field(f, time_col, schema.time), field(f, y_col, schema.y), {}, {}};
    for (std::size_t c = 0; c < x_cols.size(); ++c)
      r.x.push_back(field(f, x_cols[c], x_names[c]));
    for (std::size_t c = 0; c < z_cols.size(); ++c)
      r.z.push_back(field(f, z_cols[c], z_names[c]));
    const std::string& id = f[id_col];
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) id_order.push_back(id);
    it->second.push_back(std::move(r));
  }
  if (id_order.empty()) throw Error(ErrorCode::InvalidArgument, "CSV has no data rows");

  // Individuals keep first-appearance order; rows within one are ordered
  // by time, which must be strictly increasing.
  const std::size_t m = rows.at(id_order.front()).size();
  const std::size_t p = x_cols.size(), q = z_cols.size();
  std::vector<double> y, x, z;
  for (const auto& id : id_order) {
    auto& r = rows.at(id);
    if (r.size() != m)
      throw Error(ErrorCode::UnbalancedPanel,
                  "UnbalancedPanel(id=" + id + ", found_m=" + std::to_string(r.size()) +
                      ", expected_m=" + std::to_string(m) + ")");
    std::stable_sort(r.begin(), r.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    for (std::size_t t = 1; t < r.size(); ++t)
      if (r[t].time == r[t - 1].time)
        throw Error(ErrorCode::InvalidArgument,
                    "row " + std::to_string(r[t].line) + ": duplicate time for id " + id);
    for (const auto& row : r) {
      y.push_back(row.y);
      x.insert(x.end(), row.x.begin(), row.x.end());
      z.insert(z.end(), row.z.begin(), row.z.end());
    }
  }
  LongitudinalDataset d(id_order.size(), m, p, q, std::move(y), std::move(x),
                        std::move(z), id_order);
  const auto violations = validate(d);
  if (!violations.empty())
    throw Error(ErrorCode::InvalidArgument,
                violations.front().invariant + " at " + violations.front().location);
  return d;
}

LongitudinalDataset load_dataset(const std::filesystem::path& path,
                                 const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_csv(buf.str(), schema);
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string dataset_to_csv(const LongitudinalDataset& d) {
  std::string out = "id,time,y";
  for (std::size_t k = 0; k < d.p(); ++k) out += ",x" + std::to_string(k + 1);
  for (std::size_t k = 0; k < d.q(); ++k) out += ",z" + std::to_string(k + 1);
  out += '\n';
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    const auto yi = d.y(i);
    const auto xi = d.x(i);
    const auto zi = d.z(i);
    for (std::size_t t = 0; t < d.measurements(); ++t) {
      out += csv_escape(d.ids()[i]);
      out += ',' + std::to_string(t + 1) + ',';
      append_double(out, yi(t));
      for (std::size_t k = 0; k < d.p(); ++k) {
        out += ',';
        append_double(out, xi(t, k));
      }
      for (std::size_t k = 0; k < d.q(); ++k) {
        out += ',';
        append_double(out, zi(t, k));
      }
      out += '\n';
    }
  }
  return out;
}

void write_dataset(const LongitudinalDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << dataset_to_csv(d);
}

}  // namespace mdsp
