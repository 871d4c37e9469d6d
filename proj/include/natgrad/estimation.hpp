#pragma once

#include <optional>
#include <span>
#include <vector>

#include "natgrad/numerics.hpp"

namespace natgrad {

/// One finite-horizon rollout.
///
/// observations holds T + 1 entries (the last is the observation after the
/// final step); actions, rewards and log_probs hold T. When the episode hit
/// a termination predicate at step k, terminated_at = k and every reward
/// after k is zero.
struct Trajectory {
  std::vector<Vec> observations;
  std::vector<Vec> actions;
  Vec rewards;
  Vec log_probs;
  std::optional<int> terminated_at;
  int horizon = 0;  // env horizon T used for the baseline's time features

  int length() const { return static_cast<int>(rewards.size()); }
  double total_reward() const;
  void validate() const;
};

struct BaselineModel {
  Vec weights;
  double ridge = 1e-5;
  int fitted_on_iteration = -1;  // -1: never fitted, predicts zero

  static BaselineModel zero(int obs_dim);
};

Vec discounted_returns(std::span<const double> rewards, double gamma);

/// [s/10, (s/10)^2, tau, tau^2, tau^3, 1] with tau = t / T.
Vec baseline_features(std::span<const double> obs, int t, int horizon);
inline int baseline_feature_dim(int obs_dim) { return 2 * obs_dim + 4; }

/// Ridge regression of discounted returns on baseline features over every
/// live (state, t) pair. Steps after a termination are excluded.
BaselineModel fit_baseline(std::span<const Trajectory> trajectories, double gamma, double ridge,
                           int iteration = -1);

double predict_value(const BaselineModel& model, std::span<const double> obs, int t, int horizon);

/// GAE advantages via the backward recursion A_t = delta_t + gamma lambda A_{t+1}.
/// Values at states after a termination are taken as zero.
Vec gae_advantages(const Trajectory& traj, const BaselineModel& baseline, double gamma, double lambda);

/// Zero mean, unit (population) standard deviation; zeros when the variance is below 1e-12.
Vec standardize_advantages(std::span<const double> advantages);

}  // namespace natgrad
