#pragma once

#include <optional>
#include <span>
#include <vector>

#include "natgrad/numerics.hpp"

namespace natgrad {

/// Random Fourier features y_i = sin((P s)_i / bandwidth + phase_i).
/// The projection and phases are drawn once and never trained.
struct RbfFeaturizer {
  Matrix projection;  // num_features x obs_dim, entries N(0, 1)
  Vec phases;         // num_features, U[-pi, pi)
  double bandwidth = 1.0;

  int num_features() const { return static_cast<int>(projection.rows()); }
  int obs_dim() const { return static_cast<int>(projection.cols()); }

  static RbfFeaturizer sample(int obs_dim, int num_features, double bandwidth, Rng& rng);

  bool operator==(const RbfFeaturizer&) const = default;
};

/// Writes rbf features of `obs` into `out` (length num_features).
void rbf_features(const RbfFeaturizer& f, std::span<const double> obs, std::span<double> out);
Vec rbf_features(const RbfFeaturizer& f, std::span<const double> obs);

/// Mean pairwise Euclidean distance, floored. Needs at least two observations.
double bandwidth_heuristic(std::span<const Vec> observations, double floor);

/// Diagonal Gaussian policy N(W y(s) + b, diag(exp(log_std))^2).
///
/// y(s) is the observation itself for the linear family, or its random
/// Fourier features for the rbf family. The flat parameter vector packs W
/// row-major, then b, then log_std.
class Policy {
 public:
  static constexpr double kMinLogStd = -20.0;
  static constexpr double kMaxLogStd = 2.0;

  Policy() = default;
  static Policy linear(int obs_dim, int act_dim);
  static Policy rbf(int obs_dim, int act_dim, RbfFeaturizer featurizer);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  int feature_dim() const { return static_cast<int>(weights_.cols()); }
  int param_count() const { return act_dim_ * feature_dim() + 2 * act_dim_; }
  bool is_rbf() const { return featurizer_.has_value(); }
  const std::optional<RbfFeaturizer>& featurizer() const { return featurizer_; }

  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }
  const Vec& bias() const { return bias_; }
  Vec& bias() { return bias_; }
  const Vec& log_std() const { return log_std_; }
  Vec& log_std() { return log_std_; }

  Vec parameters() const;
  void set_parameters(std::span<const double> theta);
  void clamp_log_std();

  bool same_architecture(const Policy& other) const;

  void features(std::span<const double> obs, std::span<double> out) const;
  Vec features(std::span<const double> obs) const;

  Vec mean_action(std::span<const double> obs) const;

  struct Sample {
    Vec action;
    double log_prob;
  };
  Sample sample(std::span<const double> obs, Rng& rng) const;

  double log_prob(std::span<const double> obs, std::span<const double> action) const;

  /// Score function d/dtheta log pi(a | s) in the flat parameter order.
  Vec grad_log_prob(std::span<const double> obs, std::span<const double> action) const;

  /// Same as grad_log_prob when the features are already known; no allocation.
  void grad_log_prob_from_features(std::span<const double> features, std::span<const double> action,
                                   std::span<double> out) const;

  bool operator==(const Policy&) const = default;

 private:
  void check_obs(std::span<const double> obs) const;
  void check_action(std::span<const double> action) const;

  int obs_dim_ = 0;
  int act_dim_ = 0;
  Matrix weights_;
  Vec bias_;
  Vec log_std_;
  std::optional<RbfFeaturizer> featurizer_;
};

/// Average over states of the closed-form KL(p(.|s) || q(.|s)).
double kl_mean(const Policy& p, const Policy& q, std::span<const Vec> states);

}  // namespace natgrad
