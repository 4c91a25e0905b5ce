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
#include "mdsp/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mdsp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

bool admissible(double v, SignConstraint c) {
  switch (c) {
    case SignConstraint::free: return true;
    case SignConstraint::positive: return v > 0.0;
    case SignConstraint::negative: return v < 0.0;
  }
  return true;
}

bool ties(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Moreau envelope of lambda*|.| with parameter 1/kappa.
double huber(double x, double lambda, double kappa) {
  const double ax = std::abs(x);
  const double delta = lambda / kappa;
  return ax <= delta ? 0.5 * kappa * ax * ax : lambda * ax - 0.5 * lambda * delta;
}

double min_distance(double v, std::span<const double> targets) {
  double best = std::abs(v);
  for (double d : targets) best = std::min(best, std::abs(v - d));
  return best;
}

}  // namespace

DirectionSet::DirectionSet(std::span<const double> group_effects) : targets_{0.0} {
  for (double g : group_effects)
    if (std::find(targets_.begin(), targets_.end(), g) == targets_.end())
      targets_.push_back(g);
}

double DirectionSet::distance(double beta) const {
  double best = kInf;
  for (double d : targets_) best = std::min(best, std::abs(beta - d));
  return best;
}

double DirectionSet::nearest(double beta) const {
  double best = kInf, arg = 0.0;
  for (double d : targets_) {
    const double dist = std::abs(beta - d);
    if (dist < best) {
      best = dist;
      arg = d;
    }
  }
  return arg;
}

double mdsp_value(double beta, const DirectionSet& directions, double lambda) {
  return lambda * directions.distance(beta);
}

double prox_mdsp(double u, const DirectionSet& directions, double lambda, double kappa) {
  if (lambda == 0.0) return u;
  const double threshold = lambda / kappa;
  double best_v = u, best_obj = kInf;
  bool best_from_zero = false;
  for (std::size_t j = 0; j < directions.targets().size(); ++j) {
    const double d = directions.targets()[j];
    const double v = d + soft_threshold(u - d, threshold);
    const double obj = 0.5 * kappa * (v - u) * (v - u) + lambda * directions.distance(v);
    const bool from_zero = j == 0;
    bool take = false;
    if (best_obj == kInf || (obj < best_obj && !ties(obj, best_obj))) {
      take = true;
    } else if (ties(obj, best_obj)) {
      if (std::abs(v) < std::abs(best_v)) take = true;
      else if (std::abs(v) == std::abs(best_v) && from_zero && !best_from_zero) take = true;
    }
    if (take) {
      best_v = v;
      best_obj = obj;
      best_from_zero = from_zero;
    }
  }
  return best_v;
}

GammaUpdate update_gamma(std::span<const double> nu, const Eigen::VectorXd& current,
                         double lambda, std::span<const SignConstraint> constraints,
                         int grid_resolution) {
  GammaUpdate out{current, false, 0.0};
  const Eigen::Index groups = current.size();
  auto constraint = [&](Eigen::Index l) {
    return static_cast<std::size_t>(l) < constraints.size() ? constraints[l]
                                                             : SignConstraint::free;
  };
  std::vector<double> distinct;
  for (double v : nu)
    if (v != 0.0) distinct.push_back(v);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  auto total = [&](const Eigen::VectorXd& g) {
    const DirectionSet dirs(g);
    double s = 0.0;
    for (double v : nu) s += dirs.distance(v);
    return s;
  };

  for (int sweep = 0; sweep < 10 && groups > 0; ++sweep) {
    bool changed = false;
    for (Eigen::Index l = 0; l < groups; ++l) {
      const SignConstraint c = constraint(l);
      std::vector<double> candidates;
      for (double v : distinct)
        if (admissible(v, c)) candidates.push_back(v);
      bool fallback = false;
      if (candidates.empty()) {
        out.empty_candidates = true;
        if (c == SignConstraint::free || grid_resolution <= 0) continue;
        double radius = 0.0;
        for (double v : nu) radius = std::max(radius, std::abs(v));
        if (radius == 0.0) continue;
        for (int g = 1; g <= grid_resolution; ++g) {
          const double step = radius * g / grid_resolution;
          candidates.push_back(c == SignConstraint::positive ? step : -step);
        }
        fallback = true;
      }
      Eigen::VectorXd trial = out.gamma;
      double best_obj = kInf, best = out.gamma(l);
      for (double cand : candidates) {
        trial(l) = cand;
        const double obj = total(trial);
        const bool better = obj < best_obj && !ties(obj, best_obj);
        const bool closer = ties(obj, best_obj) &&
                            std::abs(cand - current(l)) < std::abs(best - current(l));
        if (best_obj == kInf || better || closer) {
          best_obj = obj;
          best = cand;
        }
      }
      // The grid fallback only moves a center when it strictly helps.
      trial(l) = out.gamma(l);
      if (fallback && !(best_obj < total(trial) && !ties(best_obj, total(trial)))) continue;
      changed |= best != out.gamma(l);
      out.gamma(l) = best;
    }
    if (!changed) break;
  }
  out.objective = lambda * total(out.gamma);
  return out;
}

double direction_profile(std::span<const double> u, double center,
                         std::span<const double> others, double lambda, double kappa) {
  double s = 0.0;
  for (double ui : u) {
    const double e = huber(min_distance(ui, others), lambda, kappa);
    s += std::min(e, huber(center - ui, lambda, kappa));
  }
  return s;
}

double minimize_direction_profile(std::span<const double> u, double current,
                                  std::span<const double> others, double lambda,
                                  double kappa, SignConstraint constraint) {
  if (lambda == 0.0 || u.empty()) return current;
  const double delta = lambda / kappa;
  const double half_k = 0.5 * kappa;

  struct Event {
    double pos, da, db, dk;
  };
  std::vector<Event> events;
  events.reserve(4 * u.size());
  double k0 = 0.0;
  for (double ui : u) {
    const double t = min_distance(ui, others);
    const double e = huber(t, lambda, kappa);
    k0 += e;
    if (t <= 0.0) continue;
    if (t > delta) {
      events.push_back({ui - t, 0.0, -lambda, lambda * ui - 0.5 * lambda * delta - e});
      events.push_back({ui - delta, half_k, -kappa * ui + lambda,
                        half_k * ui * ui - lambda * ui + 0.5 * lambda * delta});
      events.push_back({ui + delta, -half_k, kappa * ui + lambda,
                        -half_k * ui * ui - lambda * ui - 0.5 * lambda * delta});
      events.push_back({ui + t, 0.0, -lambda, lambda * ui + 0.5 * lambda * delta + e});
    } else {
      events.push_back({ui - t, half_k, -kappa * ui, half_k * ui * ui - e});
      events.push_back({ui + t, -half_k, kappa * ui, -half_k * ui * ui + e});
    }
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.pos < b.pos; });

  double lo = -kInf, hi = kInf;
  if (constraint == SignConstraint::positive) lo = 0.0;
  if (constraint == SignConstraint::negative) hi = 0.0;

  double best = current, best_val = kInf;
  auto consider = [&](double c, double val) {
    if (!admissible(c, constraint)) return;
    if (best_val == kInf || (val < best_val && !ties(val, best_val)) ||
        (ties(val, best_val) && std::abs(c - current) < std::abs(best - current))) {
      best = c;
      best_val = val;
    }
  };
  auto interval = [&](double left, double right, double a, double b, double k) {
    left = std::max(left, lo);
    right = std::min(right, hi);
    if (!(left <= right)) return;
    if (!std::isfinite(left) || !std::isfinite(right)) {
      // Outer pieces are constant: only the point nearest the current
      // center matters.
      consider(std::clamp(current, left, right), k0);
      if (std::isfinite(left)) consider(left, k0);
      if (std::isfinite(right)) consider(right, k0);
      return;
    }
    auto f = [&](double c) { return (a * c + b) * c + k; };
    double c;
    if (a > 0.0) c = std::clamp(-b / (2.0 * a), left, right);
    else if (b > 0.0) c = left;
    else if (b < 0.0) c = right;
    else c = std::clamp(current, left, right);
    consider(c, f(c));
    consider(std::clamp(current, left, right), f(std::clamp(current, left, right)));
  };

  double a = 0.0, b = 0.0, k = k0, prev = -kInf;
  std::size_t idx = 0;
  while (idx < events.size()) {
    const double x = events[idx].pos;
    interval(prev, x, a, b, k);
    while (idx < events.size() && events[idx].pos == x) {
      a += events[idx].da;
      b += events[idx].db;
      k += events[idx].dk;
      ++idx;
    }
    prev = x;
  }
  interval(prev, kInf, 0.0, 0.0, k0);

  if (best_val == kInf) return current;
  // Guard the sweep's accumulated rounding with exact evaluations.
  const double exact_best = direction_profile(u, best, others, lambda, kappa);
  if (!admissible(current, constraint)) return best;
  const double exact_current = direction_profile(u, current, others, lambda, kappa);
  return exact_best < exact_current ? best : current;
}

double direction_block_objective(std::span<const double> u, std::span<const double> nu,
                                 const DirectionSet& directions, double lambda,
                                 double kappa) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    s += 0.5 * kappa * (nu[i] - u[i]) * (nu[i] - u[i]) +
         mdsp_value(nu[i], directions, lambda);
  return s;
}

DirectionBlock minimize_direction_block(std::span<const double> u,
                                        const Eigen::VectorXd& gamma, double lambda,
                                        double kappa,
                                        std::span<const SignConstraint> constraints) {
  DirectionBlock out;
  out.gamma = gamma;
  const auto n = static_cast<Eigen::Index>(u.size());
  out.nu.resize(n);
  if (lambda == 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) out.nu(i) = u[i];
    return out;
  }
  const Eigen::Index groups = gamma.size();
  auto profile_value = [&]() {
    const DirectionSet dirs(out.gamma);
    double s = 0.0;
    for (double ui : u) s += huber(dirs.distance(ui), lambda, kappa);
    return s;
  };
  double previous = profile_value();
  std::vector<double> others;
  for (int sweep = 0; sweep < 10 && groups > 0; ++sweep) {
    ++out.sweeps;
    for (Eigen::Index l = 0; l < groups; ++l) {
      others.clear();
      for (Eigen::Index j = 0; j < groups; ++j)
        if (j != l) others.push_back(out.gamma(j));
      const SignConstraint c = static_cast<std::size_t>(l) < constraints.size()
                                   ? constraints[l]
                                   : SignConstraint::free;
      out.gamma(l) = minimize_direction_profile(u, out.gamma(l), others, lambda, kappa, c);
    }
    if (groups == 1) break;
    const double value = profile_value();
    const bool small = std::abs(previous - value) <= 1e-10 * std::max(1.0, std::abs(previous));
    previous = value;
    if (small) break;
  }
  const DirectionSet dirs(out.gamma);
  for (Eigen::Index i = 0; i < n; ++i) out.nu(i) = prox_mdsp(u[i], dirs, lambda, kappa);
  return out;
}

}  // namespace mdsp
