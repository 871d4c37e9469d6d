#include "natgrad/estimation.hpp"

#include <cmath>
#include <string>

#include "natgrad/errors.hpp"

namespace natgrad {

double Trajectory::total_reward() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

void Trajectory::validate() const {
  const std::size_t t = rewards.size();
  if (observations.size() != t + 1 || actions.size() != t || log_probs.size() != t) {
    throw ContractViolation("Trajectory: inconsistent lengths");
  }
  if (terminated_at) {
    for (std::size_t i = static_cast<std::size_t>(*terminated_at) + 1; i < t; ++i) {
      if (rewards[i] != 0.0) throw ContractViolation("Trajectory: nonzero reward after termination");
    }
  }
}

BaselineModel BaselineModel::zero(int obs_dim) {
  BaselineModel m;
  m.weights.assign(static_cast<std::size_t>(baseline_feature_dim(obs_dim)), 0.0);
  return m;
}

Vec discounted_returns(std::span<const double> rewards, double gamma) {
  Vec out(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

Vec baseline_features(std::span<const double> obs, int t, int horizon) {
  if (t < 0 || t > horizon) throw ContractViolation("baseline_features: t outside [0, T]");
  const std::size_t n = obs.size();
  Vec f(2 * n + 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = obs[i] / 10.0;
    f[i] = s;
    f[n + i] = s * s;
  }
  const double tau = static_cast<double>(t) / static_cast<double>(horizon);
  f[2 * n] = tau;
  f[2 * n + 1] = tau * tau;
  f[2 * n + 2] = tau * tau * tau;
  f[2 * n + 3] = 1.0;
  return f;
}

namespace {

// Index of the last step whose state is live (not absorbed).
int last_live_step(const Trajectory& traj) {
  return traj.terminated_at ? std::min(*traj.terminated_at, traj.length() - 1) : traj.length() - 1;
}

bool absorbed(const Trajectory& traj, int t) { return traj.terminated_at && t > *traj.terminated_at; }

}  // namespace

BaselineModel fit_baseline(std::span<const Trajectory> trajectories, double gamma, double ridge, int iteration) {
  if (trajectories.empty()) throw ContractViolation("fit_baseline: no trajectories");
  if (!(ridge > 0.0)) throw ContractViolation("fit_baseline: ridge must be positive");
  const std::size_t dim = static_cast<std::size_t>(baseline_feature_dim(
      static_cast<int>(trajectories.front().observations.front().size())));

  Matrix gram(dim, dim);
  Vec rhs(dim, 0.0);
  for (const Trajectory& traj : trajectories) {
    const Vec returns = discounted_returns(traj.rewards, gamma);
    const int last = last_live_step(traj);
    for (int t = 0; t <= last; ++t) {
      const Vec f = baseline_features(traj.observations[static_cast<std::size_t>(t)], t, traj.horizon);
      if (f.size() != dim) throw ContractViolation("fit_baseline: observation dimension changed");
      const double y = returns[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < dim; ++i) {
        rhs[i] += f[i] * y;
        for (std::size_t j = 0; j <= i; ++j) gram(i, j) += f[i] * f[j];
      }
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    gram(i, i) += ridge;
    for (std::size_t j = 0; j < i; ++j) gram(j, i) = gram(i, j);
  }

  BaselineModel model;
  model.ridge = ridge;
  model.fitted_on_iteration = iteration;
  try {
    model.weights = cholesky_solve(std::move(gram), rhs);
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(std::string("fit_baseline: singular normal equations: ") + e.what(), iteration);
  }
  return model;
}

double predict_value(const BaselineModel& model, std::span<const double> obs, int t, int horizon) {
  return dot(model.weights, baseline_features(obs, t, horizon));
}

Vec gae_advantages(const Trajectory& traj, const BaselineModel& baseline, double gamma, double lambda) {
  const int n = traj.length();
  Vec values(static_cast<std::size_t>(n) + 1, 0.0);
  for (int t = 0; t <= n; ++t) {
    if (!absorbed(traj, t)) {
      values[static_cast<std::size_t>(t)] =
          predict_value(baseline, traj.observations[static_cast<std::size_t>(t)], t, traj.horizon);
    }
  }
  Vec adv(static_cast<std::size_t>(n));
  double running = 0.0;
  for (int t = n; t-- > 0;) {
    const auto i = static_cast<std::size_t>(t);
    const double delta = traj.rewards[i] + gamma * values[i + 1] - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
  }
  return adv;
}

Vec standardize_advantages(std::span<const double> advantages) {
  Vec out(advantages.size(), 0.0);
  if (advantages.size() < 2) return out;
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  if (var < 1e-12) return out;
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (advantages[i] - mean) * inv;
  return out;
}

}  // namespace natgrad
