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
#include "mdsp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mdsp/parallel.hpp"
#include "mdsp/random.hpp"
#include "mdsp/tuning.hpp"

namespace mdsp {

namespace {

constexpr double kMaxCondition = 1e12;

void require_conditioned(const Eigen::MatrixXd& a, const std::string& what) {
  if (a.rows() == 0) return;
  if (!a.allFinite()) throw Error(ErrorCode::SingularSystem, what + " has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxCondition)
    throw Error(ErrorCode::SingularSystem,
                what + " is numerically singular (eigenvalues " + std::to_string(lo) +
                    " .. " + std::to_string(hi) + ")");
}

Eigen::MatrixXd as_matrix(const ConstBlockMap& b) { return Eigen::MatrixXd(b); }

// Dense weighted least squares: minimizes sum_i ||y_i - D_i theta||^2_W.
struct WlsAccumulator {
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  explicit WlsAccumulator(Eigen::Index d)
      : gram(Eigen::MatrixXd::Zero(d, d)), rhs(Eigen::VectorXd::Zero(d)) {}
  void add(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
           const CorrelationModel& corr) {
    const Eigen::MatrixXd wd = corr.inverse_apply(design);
    gram.noalias() += design.transpose() * wd;
    rhs.noalias() += wd.transpose() * y;
  }
  Eigen::VectorXd solve(const std::string& what) const {
    require_conditioned(gram, what);
    return gram.ldlt().solve(rhs);
  }
};

FitResult unpenalized_result(const LongitudinalDataset& d, const CorrelationModel& corr,
                             std::string method, Eigen::VectorXd alpha,
                             Eigen::MatrixXd beta) {
  FitResult r;
  r.method = std::move(method);
  r.alpha = std::move(alpha);
  r.beta = std::move(beta);
  r.gamma.assign(d.p(), Eigen::VectorXd());
  r.assignment = assign_groups(r.beta, r.gamma);
  r.correlation = corr.kind();
  r.rho_hat = corr.rho();
  r.lambda = 0.0;
  r.kappa = 0.0;
  r.df = degrees_of_freedom(r);
  r.noise_variance = noise_variance(r, d);
  r.objective = penalized_objective(d, corr, r.alpha, r.beta, r.gamma, 0.0);
  r.state.alpha = r.alpha;
  r.state.beta = r.beta;
  r.state.nu = r.beta;
  r.state.gamma = r.gamma;
  r.state.dual = Eigen::MatrixXd::Zero(r.beta.rows(), r.beta.cols());
  return r;
}

double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

bool admissible(double v, SignConstraint c) {
  return c == SignConstraint::free || (c == SignConstraint::positive && v > 0.0) ||
         (c == SignConstraint::negative && v < 0.0);
}

// Index into {0, gamma_1, ..., gamma_{B-1}} of the nearest direction, or -1
// when two directions tie.
int nearest_direction(double v, const Eigen::VectorXd& gamma) {
  double best = std::abs(v);
  int arg = 0;
  bool tie = false;
  for (Eigen::Index l = 0; l < gamma.size(); ++l) {
    const double d = std::abs(v - gamma(l));
    if (d < best) {
      best = d;
      arg = static_cast<int>(l) + 1;
      tie = false;
    } else if (d == best) {
      tie = true;
    }
  }
  return tie ? -1 : arg;
}

double direction_value(int index, const Eigen::VectorXd& gamma) {
  return index == 0 ? 0.0 : gamma(index - 1);
}

// Exact minimizer of the penalized objective on the face fixed by the
// current assignment: zero-group coefficients stay 0, members of a group
// share its effect, free coefficients keep the side of their nearest
// direction so the penalty is linear there. Accepted only when the face is
// preserved, which makes the new objective no larger than the old one.
bool polish_on_face(const LongitudinalDataset& d, const CorrelationModel& corr, double lambda,
                    bool frozen, const std::vector<std::vector<SignConstraint>>& constraints,
                    FitResult& fit) {
  const std::size_t n = d.n_individuals(), p = d.p(), q = d.q();
  const auto& labels = fit.assignment.labels;

  std::vector<std::vector<int>> active(p);
  Eigen::Index ns = static_cast<Eigen::Index>(q);
  for (std::size_t k = 0; k < p; ++k) {
    active[k].assign(fit.gamma[k].size(), -1);
    if (frozen) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const int l = labels[k][i];
      if (l > 0 && active[k][l - 1] < 0) active[k][l - 1] = static_cast<int>(ns++);
    }
  }

  struct FreeCoord {
    std::size_t k;
    int direction;
    double sign;
  };
  std::vector<std::vector<FreeCoord>> frees(n);
  Eigen::VectorXd shared_linear = Eigen::VectorXd::Zero(ns);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) {
      if (labels[k][i] != SubgroupAssignment::kFreeLabel) continue;
      const int dir = nearest_direction(fit.beta(i, k), fit.gamma[k]);
      if (dir < 0) return false;
      const double diff = fit.beta(i, k) - direction_value(dir, fit.gamma[k]);
      const double s = diff > 0 ? 1.0 : -1.0;
      frees[i].push_back({k, dir, s});
      if (dir > 0 && active[k][dir - 1] >= 0) shared_linear(active[k][dir - 1]) -= lambda * s;
    }

  Eigen::MatrixXd m_acc = Eigen::MatrixXd::Zero(ns, ns);
  Eigen::VectorXd r_acc = Eigen::VectorXd::Zero(ns);
  struct Local {
    Eigen::MatrixXd swf, k_inv;
    Eigen::VectorXd fwy_g;
  };
  std::vector<Local> local(n);
  try {
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::MatrixXd xi = as_matrix(d.x(i));
      Eigen::MatrixXd s_i = Eigen::MatrixXd::Zero(d.measurements(), ns);
      if (q > 0) s_i.leftCols(q) = as_matrix(d.z(i));
      Eigen::VectorXd y_t = d.y(i);
      for (std::size_t k = 0; k < p; ++k) {
        const int l = labels[k][i];
        if (l <= 0) continue;
        if (active[k][l - 1] >= 0) s_i.col(active[k][l - 1]) += xi.col(k);
        else y_t -= xi.col(k) * fit.gamma[k](l - 1);
      }
      const auto f = static_cast<Eigen::Index>(frees[i].size());
      Eigen::MatrixXd f_i(d.measurements(), f);
      Eigen::VectorXd g_i(f);
      for (Eigen::Index c = 0; c < f; ++c) {
        f_i.col(c) = xi.col(frees[i][c].k);
        g_i(c) = lambda * frees[i][c].sign;
      }
      const Eigen::MatrixXd ws = corr.inverse_apply(s_i);
      const Eigen::VectorXd wy = corr.inverse_apply(y_t);
      m_acc.noalias() += s_i.transpose() * ws;
      r_acc.noalias() += ws.transpose() * y_t;
      if (f > 0) {
        const Eigen::MatrixXd wf = corr.inverse_apply(f_i);
        const Eigen::MatrixXd fwf = f_i.transpose() * wf;
        require_conditioned(fwf, "free block");
        local[i].k_inv = fwf.ldlt().solve(Eigen::MatrixXd::Identity(f, f));
        local[i].swf = ws.transpose() * f_i;
        local[i].fwy_g = f_i.transpose() * wy - g_i;
        m_acc.noalias() -= local[i].swf * local[i].k_inv * local[i].swf.transpose();
        r_acc.noalias() -= local[i].swf * (local[i].k_inv * local[i].fwy_g);
      }
    }
  } catch (const Error&) {
    return false;
  }
  r_acc -= shared_linear;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(ns);
  if (ns > 0) {
    try {
      require_conditioned(m_acc, "face system");
    } catch (const Error&) {
      return false;
    }
    theta = m_acc.ldlt().solve(r_acc);
  }

  FitResult out = fit;
  out.alpha = theta.head(q);
  for (std::size_t k = 0; k < p; ++k)
    for (std::size_t l = 0; l < active[k].size(); ++l)
      if (active[k][l] >= 0) out.gamma[k](l) = theta(active[k][l]);
  for (std::size_t k = 0; k < p; ++k) {
    const auto& g = out.gamma[k];
    const auto cons = k < constraints.size() ? constraints[k] : std::vector<SignConstraint>();
    for (Eigen::Index l = 0; l < g.size(); ++l) {
      if (active[k][l] < 0) continue;
      if (g(l) == 0.0) return false;
      if (static_cast<std::size_t>(l) < cons.size() && !admissible(g(l), cons[l])) return false;
      for (Eigen::Index j = 0; j < g.size(); ++j)
        if (j != l && g(j) == g(l)) return false;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const int l = labels[k][i];
      if (l == 0) out.beta(i, k) = 0.0;
      else if (l > 0) out.beta(i, k) = out.gamma[k](l - 1);
    }
    const auto f = static_cast<Eigen::Index>(frees[i].size());
    if (f == 0) continue;
    const Eigen::VectorXd b = local[i].k_inv * (local[i].fwy_g - local[i].swf.transpose() * theta);
    for (Eigen::Index c = 0; c < f; ++c) {
      const auto& fc = frees[i][c];
      const Eigen::VectorXd& g = out.gamma[fc.k];
      if (nearest_direction(b(c), g) != fc.direction) return false;
      if ((b(c) - direction_value(fc.direction, g)) * fc.sign <= 0.0) return false;
      out.beta(i, fc.k) = b(c);
    }
  }
  out.objective = penalized_objective(d, corr, out.alpha, out.beta, out.gamma, lambda);
  if (!std::isfinite(out.objective) ||
      out.objective > fit.objective + 1e-12 * std::max(1.0, std::abs(fit.objective)))
    return false;
  if (assign_groups(out.beta, out.gamma) != fit.assignment) return false;
  out.polished = true;
  fit = std::move(out);
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// PrimalSystem

PrimalSystem::PrimalSystem(const LongitudinalDataset& d, const CorrelationModel& corr,
                           double kappa)
    : data_(&d), corr_(corr), kappa_(kappa), n_(d.n_individuals()), p_(d.p()), q_(d.q()) {
  if (corr.m() != d.measurements())
    throw Error(ErrorCode::ShapeMismatch, "correlation size != measurements per individual");
  const auto p = static_cast<Eigen::Index>(p_);
  const auto q = static_cast<Eigen::Index>(q_);
  xwx_.resize(n_);
  xwz_.resize(n_);
  a_inv_.resize(n_);
  a_inv_p_.resize(n_);
  xwy_.resize(n_);
  zwy_.resize(n_);
  a_inv_b_.resize(n_);
  ywy_.resize(n_);
  zwz_ = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(q, q);
  base_rhs_ = Eigen::VectorXd::Zero(q);
  for (std::size_t i = 0; i < n_; ++i) {
    const Eigen::MatrixXd xi = as_matrix(d.x(i));
    const Eigen::MatrixXd zi = as_matrix(d.z(i));
    const Eigen::VectorXd yi = d.y(i);
    const Eigen::MatrixXd wx = corr.inverse_apply(xi);
    const Eigen::VectorXd wy = corr.inverse_apply(yi);
    xwx_[i] = xi.transpose() * wx;
    xwz_[i] = wx.transpose() * zi;
    xwy_[i] = wx.transpose() * yi;
    zwy_[i] = zi.transpose() * wy;
    ywy_[i] = yi.dot(wy);
    if (q > 0) zwz_.noalias() += zi.transpose() * corr.inverse_apply(zi);
    Eigen::MatrixXd a = xwx_[i] + kappa * Eigen::MatrixXd::Identity(p, p);
    require_conditioned(a, "individual block " + std::to_string(i + 1));
    a_inv_[i] = a.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    a_inv_p_[i] = a_inv_[i] * xwz_[i];
    a_inv_b_[i] = a_inv_[i] * xwy_[i];
    if (q > 0) {
      schur.noalias() -= xwz_[i].transpose() * a_inv_p_[i];
      base_rhs_.noalias() += zwy_[i] - a_inv_p_[i].transpose() * xwy_[i];
    }
  }
  if (q > 0) {
    schur += zwz_;
    require_conditioned(schur, "Schur complement");
    schur_.compute(schur);
  }
}

void PrimalSystem::solve(const Eigen::MatrixXd& nu, const Eigen::MatrixXd& dual,
                         Eigen::VectorXd& alpha, Eigen::MatrixXd& beta) const {
  const auto p = static_cast<Eigen::Index>(p_);
  const auto q = static_cast<Eigen::Index>(q_);
  beta.resize(static_cast<Eigen::Index>(n_), p);
  Eigen::VectorXd rhs = base_rhs_;
  Eigen::VectorXd kc(p);
  const bool penalized = kappa_ != 0.0;
  if (penalized && q > 0)
    for (std::size_t i = 0; i < n_; ++i) {
      kc = kappa_ * nu.row(i).transpose() - dual.row(i).transpose();
      rhs.noalias() -= a_inv_p_[i].transpose() * kc;
    }
  alpha = q > 0 ? Eigen::VectorXd(schur_.solve(rhs)) : Eigen::VectorXd();
  for (std::size_t i = 0; i < n_; ++i) {
    Eigen::VectorXd b = a_inv_b_[i];
    if (penalized) {
      kc = kappa_ * nu.row(i).transpose() - dual.row(i).transpose();
      b.noalias() += a_inv_[i] * kc;
    }
    if (q > 0) b.noalias() -= a_inv_p_[i] * alpha;
    beta.row(i) = b.transpose();
  }
}

double PrimalSystem::loss(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& beta) const {
  double s = 0.0;
  Eigen::VectorXd zwy_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q_));
  for (std::size_t i = 0; i < n_; ++i) {
    const Eigen::VectorXd b = beta.row(i).transpose();
    s += 0.5 * ywy_[i] - b.dot(xwy_[i]) + 0.5 * b.dot(xwx_[i] * b);
    if (q_ > 0) {
      s += b.dot(xwz_[i] * alpha);
      zwy_sum += zwy_[i];
    }
  }
  if (q_ > 0) s += 0.5 * alpha.dot(zwz_ * alpha) - alpha.dot(zwy_sum);
  return s;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> update_primal(const LongitudinalDataset& dataset,
                                                          const ModelConfig& config,
                                                          const CorrelationModel& corr,
                                                          const Eigen::MatrixXd& nu,
                                                          const Eigen::MatrixXd& dual) {
  PrimalSystem sys(dataset, corr, config.kappa ? *config.kappa : default_kappa(dataset, corr));
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;
  sys.solve(nu, dual, alpha, beta);
  return {alpha, beta};
}

// ---------------------------------------------------------------------------

double penalized_objective(const LongitudinalDataset& d, const CorrelationModel& corr,
                           const Eigen::VectorXd& alpha, const Eigen::MatrixXd& beta,
                           const std::vector<Eigen::VectorXd>& gamma, double lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    Eigen::VectorXd r = d.y(i) - d.x(i) * beta.row(i).transpose();
    if (d.q() > 0) r -= d.z(i) * alpha;
    loss += 0.5 * r.dot(corr.inverse_apply(r));
  }
  double pen = 0.0;
  if (lambda != 0.0)
    for (std::size_t k = 0; k < d.p(); ++k) {
      const DirectionSet dirs(gamma[k]);
      for (std::size_t i = 0; i < d.n_individuals(); ++i)
        pen += dirs.distance(beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
  return loss + lambda * pen;
}

SubgroupAssignment assign_groups(const Eigen::MatrixXd& beta,
                                 const std::vector<Eigen::VectorXd>& gamma) {
  SubgroupAssignment a;
  a.labels.assign(beta.cols(), std::vector<int>(beta.rows(), SubgroupAssignment::kFreeLabel));
  for (Eigen::Index k = 0; k < beta.cols(); ++k)
    for (Eigen::Index i = 0; i < beta.rows(); ++i) {
      const double v = beta(i, k);
      if (v == 0.0) {
        a.labels[k][i] = 0;
        continue;
      }
      const auto& g = gamma[k];
      for (Eigen::Index l = 0; l < g.size(); ++l)
        if (v == g(l)) {
          a.labels[k][i] = static_cast<int>(l) + 1;
          break;
        }
    }
  return a;
}

double default_kappa(const LongitudinalDataset& d, const CorrelationModel& corr) {
  double top = 0.0;
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    const Eigen::MatrixXd xi = as_matrix(d.x(i));
    const Eigen::MatrixXd g = xi.transpose() * corr.inverse_apply(xi);
    top = std::max(top, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .maxCoeff());
  }
  return top > 0.0 ? top : 1.0;
}

CorrelationModel resolve_correlation(const LongitudinalDataset& d, const ModelConfig& config) {
  const std::size_t m = d.measurements();
  if (config.correlation == CorrelationKind::independence)
    return CorrelationModel::independence(m);
  if (config.fixed_rho) return {config.correlation, *config.fixed_rho, m};
  const auto ind = CorrelationModel::independence(m);
  PrimalSystem sys(d, ind, 0.0);
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(d.n_individuals(), d.p());
  sys.solve(zeros, zeros, alpha, beta);
  Eigen::MatrixXd residuals(d.n_individuals(), m);
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    Eigen::VectorXd r = d.y(i) - d.x(i) * beta.row(i).transpose();
    if (d.q() > 0) r -= d.z(i) * alpha;
    residuals.row(i) = r.transpose();
  }
  return {config.correlation, estimate_rho(config.correlation, residuals), m};
}

namespace {

Eigen::VectorXd initial_centers(const Eigen::VectorXd& column, int groups,
                                const std::vector<SignConstraint>& cons) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(groups - 1);
  for (int l = 0; l + 1 < groups; ++l) {
    const SignConstraint s = l < static_cast<int>(cons.size()) ? cons[l] : SignConstraint::free;
    std::vector<double> vals;
    for (double v : column)
      if (v != 0.0 && admissible(v, s)) vals.push_back(v);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    // Free centers spread over the quantiles; constrained ones take the
    // median of their half-line.
    const double frac = s == SignConstraint::free ? (l + 1.0) / groups : 0.5;
    const auto idx = std::min(vals.size() - 1, static_cast<std::size_t>(frac * vals.size()));
    c(l) = vals[idx];
  }
  return c;
}

}  // namespace

CoefficientState warm_start(const LongitudinalDataset& d, const CorrelationModel& corr,
                            const ModelConfig& config) {
  PrimalSystem sys(d, corr, 0.0);
  CoefficientState s;
  const auto n = static_cast<Eigen::Index>(d.n_individuals());
  const auto p = static_cast<Eigen::Index>(d.p());
  s.dual = Eigen::MatrixXd::Zero(n, p);
  sys.solve(s.dual, s.dual, s.alpha, s.beta);
  // Numerical zeros from an exact-zero truth are treated as zero.
  const double scale = std::max(1.0, s.beta.cwiseAbs().maxCoeff());
  s.beta = s.beta.unaryExpr([&](double v) { return std::abs(v) <= 1e-10 * scale ? 0.0 : v; });
  s.nu = s.beta;
  s.gamma.resize(d.p());
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto cons = config.constraints_for(k);
    const Eigen::VectorXd col = s.beta.col(k);
    const Eigen::VectorXd init = initial_centers(col, config.groups_for(k), cons);
    s.gamma[k] = update_gamma(std::span<const double>(col.data(), col.size()), init, 1.0, cons,
                              config.gamma_grid_resolution)
                     .gamma;
  }
  return s;
}

// ---------------------------------------------------------------------------
// MdspSolver

MdspSolver::MdspSolver(const LongitudinalDataset& d, const ModelConfig& config)
    : MdspSolver(d, config, resolve_correlation(d, config)) {}

MdspSolver::MdspSolver(const LongitudinalDataset& d, const ModelConfig& config,
                       const CorrelationModel& corr)
    : data_(&d),
      config_(config),
      corr_(corr),
      kappa_(config.kappa ? *config.kappa : default_kappa(d, corr)),
      system_(d, corr, kappa_) {
  config_.validate(d.p());
  warm_ = warm_start(d, corr_, config_);
}

FitResult MdspSolver::run(double lambda, CoefficientState s) const {
  const auto& d = *data_;
  const std::size_t n = d.n_individuals(), p = d.p(), q = d.q();
  const double kappa = kappa_;
  std::vector<std::vector<SignConstraint>> cons(p);
  for (std::size_t k = 0; k < p; ++k) cons[k] = config_.constraints_for(k);

  FitResult fit;
  fit.method = "mdsp";
  fit.lambda = lambda;
  fit.kappa = kappa;
  fit.correlation = corr_.kind();
  fit.rho_hat = corr_.rho();
  fit.converged = false;

  auto penalty = [&](const Eigen::MatrixXd& nu) {
    double pen = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      const DirectionSet dirs(s.gamma[k]);
      for (std::size_t i = 0; i < n; ++i) pen += dirs.distance(nu(i, k));
    }
    return lambda * pen;
  };
  auto lagrangian = [&]() {
    const Eigen::MatrixXd diff = s.beta - s.nu;
    return system_.loss(s.alpha, s.beta) + penalty(s.nu) + (s.dual.array() * diff.array()).sum() +
           0.5 * kappa * diff.squaredNorm();
  };
  auto flat_gamma = [&]() {
    std::vector<double> g;
    for (const auto& v : s.gamma) g.insert(g.end(), v.data(), v.data() + v.size());
    return g;
  };

  Eigen::MatrixXd residual = s.beta - s.nu;
  std::vector<double> u(n);
  for (int it = 1; it <= config_.max_iterations; ++it) {
    const Eigen::MatrixXd beta_prev = s.beta;
    const Eigen::VectorXd alpha_prev = s.alpha;
    const std::vector<double> gamma_prev = flat_gamma();

    const double l0 = lagrangian();
    system_.solve(s.nu, s.dual, s.alpha, s.beta);
    const double l1 = lagrangian();
    for (std::size_t k = 0; k < p; ++k) {
      for (std::size_t i = 0; i < n; ++i) u[i] = s.beta(i, k) + s.dual(i, k) / kappa;
      if (fit.gamma_frozen) {
        const DirectionSet dirs(s.gamma[k]);
        for (std::size_t i = 0; i < n; ++i) s.nu(i, k) = prox_mdsp(u[i], dirs, lambda, kappa);
      } else {
        auto block = minimize_direction_block(u, s.gamma[k], lambda, kappa, cons[k]);
        s.gamma[k] = std::move(block.gamma);
        s.nu.col(k) = block.nu;
      }
    }
    const double l2 = lagrangian();
    const double tol = 1e-9 * std::max(1.0, std::abs(l0));
    if (l1 > l0 + tol || l2 > l1 + tol) ++fit.descent_violations;

    s.dual += kappa * (s.beta - s.nu);
    const Eigen::MatrixXd new_residual = s.beta - s.nu;
    fit.objective_trace.push_back(l2);
    fit.primal_residual_trace.push_back(new_residual.norm());
    fit.iterations = it;

    double change = (s.beta - beta_prev).norm() / static_cast<double>(n * p);
    if (q > 0) change += (s.alpha - alpha_prev).norm() / static_cast<double>(q);
    const std::vector<double> g = flat_gamma();
    double dg = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) dg += (g[j] - gamma_prev[j]) * (g[j] - gamma_prev[j]);
    change += std::sqrt(dg) / static_cast<double>(p);
    const double residual_change = (new_residual - residual).norm();
    residual = new_residual;
    if (change < config_.eps_primal && residual_change < config_.eps_residual) {
      fit.converged = true;
      break;
    }
  }

  // Report the feasible copy: coefficients land exactly on directions.
  fit.alpha = s.alpha;
  fit.beta = s.nu;
  fit.gamma = s.gamma;
  fit.assignment = assign_groups(fit.beta, fit.gamma);
  fit.objective = penalized_objective(d, corr_, fit.alpha, fit.beta, fit.gamma, lambda);
  if (config_.polish) polish_on_face(d, corr_, lambda, fit.gamma_frozen, cons, fit);
  s.alpha = fit.alpha;
  s.beta = fit.beta;
  s.nu = fit.beta;
  s.gamma = fit.gamma;
  fit.state = std::move(s);
  fit.df = degrees_of_freedom(fit);
  fit.noise_variance = noise_variance(fit, d);
  fit.admm_runs = 1;
  fit.admm_converged = fit.converged ? 1 : 0;
  return fit;
}

FitResult MdspSolver::fit(double lambda, const std::optional<CoefficientState>& init) const {
  std::vector<CoefficientState> starts;
  if (init) starts.push_back(*init);
  starts.push_back(warm_);
  const std::size_t p = data_->p();
  for (int r = 0; r < config_.restarts; ++r) {
    auto rng = make_stream(config_.seed, 0x5EED, static_cast<std::uint64_t>(r));
    std::normal_distribution<double> normal(0.0, 1.0);
    CoefficientState s = warm_;
    for (std::size_t k = 0; k < p; ++k) {
      const double sd = sample_sd(warm_.beta.col(static_cast<Eigen::Index>(k)));
      const auto cons = config_.constraints_for(k);
      for (Eigen::Index l = 0; l < s.gamma[k].size(); ++l) {
        double v = s.gamma[k](l) + sd * normal(rng);
        const SignConstraint c = l < static_cast<Eigen::Index>(cons.size()) ? cons[l] : SignConstraint::free;
        if (c == SignConstraint::positive) v = std::abs(v);
        if (c == SignConstraint::negative) v = -std::abs(v);
        s.gamma[k](l) = v;
      }
    }
    starts.push_back(std::move(s));
  }
  std::vector<FitResult> fits(starts.size());
  parallel_for(starts.size(), [&](std::size_t j) { fits[j] = run(lambda, starts[j]); });
  std::size_t best = 0;
  for (std::size_t j = 1; j < fits.size(); ++j)
    if (fits[j].objective < fits[best].objective &&
        !(std::abs(fits[j].objective - fits[best].objective) <=
          1e-12 * std::max(1.0, std::abs(fits[best].objective))))
      best = j;
  FitResult out = std::move(fits[best]);
  out.admm_runs = 0;
  out.admm_converged = 0;
  out.descent_violations = 0;
  for (const auto& f : fits) {
    out.admm_runs += f.admm_runs;
    out.admm_converged += f.admm_converged;
    out.descent_violations += f.descent_violations;
  }
  return out;
}

FitResult fit_mdsp(const LongitudinalDataset& dataset, const ModelConfig& config,
                   const std::optional<CoefficientState>& init) {
  config.validate(dataset.p());
  MdspSolver solver(dataset, config);
  return solver.fit(config.lambda, init);
}

// ---------------------------------------------------------------------------
// Reference estimators

FitResult fit_individualwise(const LongitudinalDataset& d, const CorrelationModel& corr) {
  PrimalSystem sys(d, corr, 0.0);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(d.n_individuals(), d.p());
  Eigen::VectorXd alpha;
  Eigen::MatrixXd beta;
  sys.solve(zeros, zeros, alpha, beta);
  return unpenalized_result(d, corr, "sub", std::move(alpha), std::move(beta));
}

FitResult fit_homogeneous(const LongitudinalDataset& d, const CorrelationModel& corr) {
  const auto p = static_cast<Eigen::Index>(d.p());
  const auto q = static_cast<Eigen::Index>(d.q());
  WlsAccumulator acc(p + q);
  Eigen::MatrixXd design(d.measurements(), p + q);
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    design.leftCols(p) = d.x(i);
    if (q > 0) design.rightCols(q) = d.z(i);
    acc.add(design, d.y(i), corr);
  }
  const Eigen::VectorXd theta = acc.solve("homogeneous normal equations");
  Eigen::MatrixXd beta(d.n_individuals(), p);
  beta.rowwise() = theta.head(p).transpose();
  FitResult r = unpenalized_result(d, corr, "homo", theta.tail(q), std::move(beta));
  r.df = d.q() + d.p();
  return r;
}

FitResult fit_oracle(const LongitudinalDataset& d, const SubgroupAssignment& assignment,
                     const CorrelationModel& corr) {
  const std::size_t n = d.n_individuals(), p = d.p();
  const auto q = static_cast<Eigen::Index>(d.q());
  if (assignment.labels.size() != p)
    throw Error(ErrorCode::ShapeMismatch, "assignment must have one label vector per covariate");
  // Column of the design for each (covariate, nonzero group) pair.
  std::vector<std::vector<int>> column(p);
  Eigen::Index cols = q;
  for (std::size_t k = 0; k < p; ++k) {
    if (assignment.labels[k].size() != n)
      throw Error(ErrorCode::ShapeMismatch, "assignment label vector length != N");
    int groups = 0;
    for (int l : assignment.labels[k]) {
      if (l < 0) throw Error(ErrorCode::InvalidArgument, "oracle assignment cannot hold free labels");
      groups = std::max(groups, l);
    }
    column[k].assign(groups, -1);
    for (int l : assignment.labels[k])
      if (l > 0 && column[k][l - 1] < 0) column[k][l - 1] = static_cast<int>(cols++);
  }
  WlsAccumulator acc(cols);
  Eigen::MatrixXd design(d.measurements(), cols);
  for (std::size_t i = 0; i < n; ++i) {
    design.setZero();
    if (q > 0) design.leftCols(q) = d.z(i);
    const auto xi = d.x(i);
    for (std::size_t k = 0; k < p; ++k) {
      const int l = assignment.labels[k][i];
      if (l > 0) design.col(column[k][l - 1]) += xi.col(static_cast<Eigen::Index>(k));
    }
    acc.add(design, d.y(i), corr);
  }
  const Eigen::VectorXd theta = acc.solve("oracle normal equations");
  FitResult r;
  r.method = "oracle";
  r.alpha = theta.head(q);
  r.gamma.resize(p);
  r.beta = Eigen::MatrixXd::Zero(n, p);
  for (std::size_t k = 0; k < p; ++k) {
    r.gamma[k] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(column[k].size()));
    for (std::size_t l = 0; l < column[k].size(); ++l)
      if (column[k][l] >= 0) r.gamma[k](l) = theta(column[k][l]);
    for (std::size_t i = 0; i < n; ++i) {
      const int l = assignment.labels[k][i];
      if (l > 0) r.beta(i, k) = r.gamma[k](l - 1);
    }
  }
  r.assignment = assignment;
  r.correlation = corr.kind();
  r.rho_hat = corr.rho();
  r.kappa = 0.0;
  r.df = degrees_of_freedom(r);
  r.noise_variance = noise_variance(r, d);
  r.objective = penalized_objective(d, corr, r.alpha, r.beta, r.gamma, 0.0);
  r.state.alpha = r.alpha;
  r.state.beta = r.beta;
  r.state.nu = r.beta;
  r.state.gamma = r.gamma;
  r.state.dual = Eigen::MatrixXd::Zero(n, p);
  return r;
}

// ---------------------------------------------------------------------------
// Lasso baseline

namespace {

struct LassoProblem {
  const LongitudinalDataset& d;
  std::vector<double> col_norm;  // ||X_ik||^2, [i*p + k]
  Eigen::LDLT<Eigen::MatrixXd> ztz;

  explicit LassoProblem(const LongitudinalDataset& data) : d(data) {
    const std::size_t n = d.n_individuals(), p = d.p();
    col_norm.resize(n * p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < p; ++k)
        col_norm[i * p + k] = d.x(i).col(static_cast<Eigen::Index>(k)).squaredNorm();
    if (d.q() > 0) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d.q(), d.q());
      for (std::size_t i = 0; i < n; ++i) g.noalias() += d.z(i).transpose() * d.z(i);
      require_conditioned(g, "Z'Z");
      ztz.compute(g);
    }
  }

  // Coordinate descent from (alpha, beta); returns sweeps used.
  int solve(double lambda, Eigen::VectorXd& alpha, Eigen::MatrixXd& beta) const {
    const std::size_t n = d.n_individuals(), p = d.p(), q = d.q();
    const std::size_t m = d.measurements();
    std::vector<Eigen::VectorXd> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = d.y(i) - d.x(i) * beta.row(i).transpose();
      if (q > 0) r[i] -= d.z(i) * alpha;
    }
    constexpr int kMaxSweeps = 100000;
    for (int sweep = 1; sweep <= kMaxSweeps; ++sweep) {
      double max_change = 0.0;
      if (q > 0) {
        Eigen::VectorXd zr = Eigen::VectorXd::Zero(q);
        for (std::size_t i = 0; i < n; ++i) zr.noalias() += d.z(i).transpose() * r[i];
        const Eigen::VectorXd delta = ztz.solve(zr);
        alpha += delta;
        for (std::size_t i = 0; i < n; ++i) r[i].noalias() -= d.z(i) * delta;
        max_change = delta.cwiseAbs().maxCoeff();
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto xi = d.x(i);
        for (std::size_t k = 0; k < p; ++k) {
          const double nk = col_norm[i * p + k];
          if (nk == 0.0) continue;
          const double old = beta(i, k);
          double grad = 0.0;
          for (std::size_t t = 0; t < m; ++t) grad += xi(t, k) * r[i](t);
          const double z = grad + nk * old;
          const double v = z > lambda ? (z - lambda) / nk : z < -lambda ? (z + lambda) / nk : 0.0;
          if (v != old) {
            for (std::size_t t = 0; t < m; ++t) r[i](t) -= xi(t, k) * (v - old);
            beta(i, k) = v;
            max_change = std::max(max_change, std::abs(v - old));
          }
        }
      }
      if (max_change < 1e-11) return sweep;
    }
    throw Error(ErrorCode::NoConvergence,
                "lasso coordinate descent did not converge at lambda=" + std::to_string(lambda));
  }
};

}  // namespace

double lasso_lambda_max(const LongitudinalDataset& d) {
  Eigen::VectorXd alpha0 = Eigen::VectorXd::Zero(d.q());
  if (d.q() > 0) {
    WlsAccumulator acc(d.q());
    const auto ind = CorrelationModel::independence(d.measurements());
    for (std::size_t i = 0; i < d.n_individuals(); ++i)
      acc.add(as_matrix(d.z(i)), d.y(i), ind);
    alpha0 = acc.solve("Z'Z");
  }
  double lmax = 0.0;
  for (std::size_t i = 0; i < d.n_individuals(); ++i) {
    Eigen::VectorXd r = d.y(i);
    if (d.q() > 0) r -= d.z(i) * alpha0;
    lmax = std::max(lmax, (d.x(i).transpose() * r).cwiseAbs().maxCoeff());
  }
  return lmax;
}

FitResult fit_lasso_baseline(const LongitudinalDataset& d, std::vector<double> grid,
                             LassoPath* path) {
  const auto ind = CorrelationModel::independence(d.measurements());
  if (grid.empty()) {
    const double lmax = lasso_lambda_max(d);
    for (int j = 0; j < 30; ++j)
      grid.push_back(lmax * std::pow(10.0, -3.0 + 3.0 * j / 29.0));
  }
  std::sort(grid.begin(), grid.end(), std::greater<>());
  LassoProblem problem(d);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(d.q());
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(d.n_individuals(), d.p());
  std::optional<FitResult> best;
  double best_gcv = std::numeric_limits<double>::infinity();
  LassoPath local;
  for (double lambda : grid) {
    problem.solve(lambda, alpha, beta);
    FitResult r = unpenalized_result(d, ind, "lasso", alpha, beta);
    r.lambda = lambda;
    double l1 = beta.cwiseAbs().sum();
    r.objective += lambda * l1;
    const std::size_t nobs = d.n_observations();
    double score = std::numeric_limits<double>::quiet_NaN();
    if (r.df < nobs) score = gcv_value(residual_sum_of_squares(r, d), nobs, r.df);
    local.lambdas.push_back(lambda);
    local.gcv.push_back(score);
    local.df.push_back(r.df);
    // Descending grid: a strict improvement is needed to move to a smaller
    // lambda, so ties stay with the larger one.
    if (std::isfinite(score) && (!best || score < best_gcv)) {
      best_gcv = score;
      best = std::move(r);
    }
  }
  if (!best) throw Error(ErrorCode::DegenerateDf, "no lasso grid point has df < mN");
  local.chosen_lambda = best->lambda;
  if (path) *path = std::move(local);
  return std::move(*best);
}

// ---------------------------------------------------------------------------
// Semi-new individuals

FitResult fit_semi_new(const Eigen::VectorXd& y, const RowMajorMatrix& x, const RowMajorMatrix& z,
                       const std::vector<Eigen::VectorXd>& gamma_hat,
                       std::optional<double> lambda_star, const ModelConfig& config,
                       std::optional<double> noise_variance) {
  const std::size_t m = static_cast<std::size_t>(y.size());
  const std::size_t p = static_cast<std::size_t>(x.cols());
  const std::size_t q = static_cast<std::size_t>(z.cols());
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "semi-new individual has no measurements");
  if (static_cast<std::size_t>(x.rows()) != m || static_cast<std::size_t>(z.rows()) != m)
    throw Error(ErrorCode::ShapeMismatch, "semi-new design rows != measurements");
  if (gamma_hat.size() != p)
    throw Error(ErrorCode::ShapeMismatch, "gamma_hat has " + std::to_string(gamma_hat.size()) +
                                              " covariates, new data has " + std::to_string(p));
  const LongitudinalDataset d(1, m, p, q, std::vector<double>(y.data(), y.data() + m),
                              std::vector<double>(x.data(), x.data() + m * p),
                              std::vector<double>(z.data(), z.data() + m * q));
  ModelConfig cfg = config;
  cfg.groups_per_covariate.clear();
  cfg.sign_constraints.clear();
  for (const auto& g : gamma_hat) cfg.groups_per_covariate.push_back(static_cast<int>(g.size()) + 1);
  if (cfg.correlation != CorrelationKind::independence && !cfg.fixed_rho)
    cfg.correlation = CorrelationKind::independence;
  const CorrelationModel corr = resolve_correlation(d, cfg);
  cfg.kappa = cfg.kappa ? *cfg.kappa : default_kappa(d, corr);
  PrimalSystem system(d, corr, *cfg.kappa);

  std::vector<std::vector<SignConstraint>> cons(p);
  // Starts: every combination of directions (bounded), plus the
  // unpenalized fit when it exists.
  std::vector<CoefficientState> starts;
  CoefficientState base;
  base.alpha = Eigen::VectorXd::Zero(q);
  base.beta = Eigen::MatrixXd::Zero(1, p);
  base.nu = base.beta;
  base.dual = Eigen::MatrixXd::Zero(1, p);
  base.gamma = gamma_hat;
  try {
    PrimalSystem ols(d, corr, 0.0);
    CoefficientState s = base;
    ols.solve(s.dual, s.dual, s.alpha, s.beta);
    s.nu = s.beta;
    starts.push_back(s);
  } catch (const Error&) {
  }
  std::size_t combos = 1;
  for (const auto& g : gamma_hat) combos *= static_cast<std::size_t>(g.size()) + 1;
  if (combos <= 256) {
    for (std::size_t c = 0; c < combos; ++c) {
      CoefficientState s = base;
      std::size_t code = c;
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t options = static_cast<std::size_t>(gamma_hat[k].size()) + 1;
        const std::size_t pick = code % options;
        code /= options;
        s.nu(0, k) = pick == 0 ? 0.0 : gamma_hat[k](static_cast<Eigen::Index>(pick - 1));
      }
      s.beta = s.nu;
      starts.push_back(s);
    }
  }

  auto fit_at = [&](double lambda) {
    FitResult best;
    bool have = false;
    for (const auto& start : starts) {
      CoefficientState s = start;
      FitResult f;
      f.gamma_frozen = true;
      f.method = "mdsp_semi_new";
      f.lambda = lambda;
      f.kappa = *cfg.kappa;
      f.correlation = corr.kind();
      f.rho_hat = corr.rho();
      f.converged = false;
      std::vector<double> u(1);
      Eigen::MatrixXd residual = s.beta - s.nu;
      for (int it = 1; it <= cfg.max_iterations; ++it) {
        const Eigen::MatrixXd beta_prev = s.beta;
        const Eigen::VectorXd alpha_prev = s.alpha;
        system.solve(s.nu, s.dual, s.alpha, s.beta);
        for (std::size_t k = 0; k < p; ++k)
          s.nu(0, k) = prox_mdsp(s.beta(0, k) + s.dual(0, k) / *cfg.kappa, DirectionSet(gamma_hat[k]),
                                 lambda, *cfg.kappa);
        s.dual += *cfg.kappa * (s.beta - s.nu);
        const Eigen::MatrixXd new_residual = s.beta - s.nu;
        f.primal_residual_trace.push_back(new_residual.norm());
        f.iterations = it;
        double change = (s.beta - beta_prev).norm() / static_cast<double>(p);
        if (q > 0) change += (s.alpha - alpha_prev).norm() / static_cast<double>(q);
        const double rc = (new_residual - residual).norm();
        residual = new_residual;
        if (change < cfg.eps_primal && rc < cfg.eps_residual) {
          f.converged = true;
          break;
        }
      }
      f.alpha = s.alpha;
      f.beta = s.nu;
      f.gamma = gamma_hat;
      f.assignment = assign_groups(f.beta, f.gamma);
      f.objective = penalized_objective(d, corr, f.alpha, f.beta, f.gamma, lambda);
      if (cfg.polish) polish_on_face(d, corr, lambda, true, cons, f);
      f.df = degrees_of_freedom(f);
      f.state = s;
      f.admm_runs = 1;
      f.admm_converged = f.converged;
      if (!have || f.objective < best.objective - 1e-12 * std::max(1.0, std::abs(best.objective))) {
        best = std::move(f);
        have = true;
      }
    }
    return best;
  };

  if (lambda_star) {
    if (!(*lambda_star >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda_star must be >= 0");
    return fit_at(*lambda_star);
  }
  if (noise_variance && !(*noise_variance >= 0.0 && std::isfinite(*noise_variance)))
    throw Error(ErrorCode::InvalidArgument, "noise variance must be finite and >= 0");
  const bool cp = noise_variance && *noise_variance > 0.0;
  const std::vector<double> grid = default_lambda_grid(d, corr);
  std::optional<FitResult> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    FitResult f = fit_at(lambda);
    const double rss = residual_sum_of_squares(f, d);
    if (!cp && f.df >= m) continue;
    const double score = cp ? rss + 2.0 * *noise_variance * static_cast<double>(f.df)
                            : gcv_value(rss, m, f.df);
    if (!best || score <= best_score) {
      best_score = score;
      best = std::move(f);
    }
  }
  if (!best) return fit_at(grid.back());
  return std::move(*best);
}

}  // namespace mdsp
