#include "natgrad/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "natgrad/errors.hpp"
#include "natgrad/kernels.hpp"

namespace natgrad {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
}

RbfFeaturizer RbfFeaturizer::sample(int obs_dim, int num_features, double bandwidth, Rng& rng) {
  if (obs_dim <= 0 || num_features <= 0) throw ContractViolation("RbfFeaturizer: dimensions must be positive");
  if (!(bandwidth > 0.0)) throw ContractViolation("RbfFeaturizer: bandwidth must be positive");
  RbfFeaturizer f;
  f.projection = Matrix(static_cast<std::size_t>(num_features), static_cast<std::size_t>(obs_dim));
  for (double& p : f.projection.data()) p = rng.normal();
  f.phases.resize(static_cast<std::size_t>(num_features));
  for (double& phi : f.phases) phi = -std::numbers::pi + 2.0 * std::numbers::pi * rng.uniform();
  f.bandwidth = bandwidth;
  return f;
}

void rbf_features(const RbfFeaturizer& f, std::span<const double> obs, std::span<double> out) {
  if (obs.size() != f.projection.cols()) {
    throw ContractViolation("rbf_features: observation has " + std::to_string(obs.size()) + " entries, expected " +
                            std::to_string(f.projection.cols()));
  }
  const double inv_bw = 1.0 / f.bandwidth;
  for (std::size_t i = 0; i < f.projection.rows(); ++i) {
    out[i] = std::sin(dot(f.projection.row(i), obs) * inv_bw + f.phases[i]);
  }
}

Vec rbf_features(const RbfFeaturizer& f, std::span<const double> obs) {
  Vec out(f.projection.rows());
  rbf_features(f, obs, out);
  return out;
}

double bandwidth_heuristic(std::span<const Vec> observations, double floor) {
  if (observations.size() < 2) throw ContractViolation("bandwidth_heuristic: needs at least two observations");
  return std::max(kernels::mean_pairwise_distance(observations), floor);
}

Policy Policy::linear(int obs_dim, int act_dim) {
  if (obs_dim <= 0 || act_dim <= 0) throw ContractViolation("Policy: dimensions must be positive");
  Policy p;
  p.obs_dim_ = obs_dim;
  p.act_dim_ = act_dim;
  p.weights_ = Matrix(static_cast<std::size_t>(act_dim), static_cast<std::size_t>(obs_dim));
  p.bias_.assign(static_cast<std::size_t>(act_dim), 0.0);
  p.log_std_.assign(static_cast<std::size_t>(act_dim), 0.0);
  return p;
}

Policy Policy::rbf(int obs_dim, int act_dim, RbfFeaturizer featurizer) {
  if (featurizer.obs_dim() != obs_dim) throw ContractViolation("Policy: featurizer obs_dim mismatch");
  Policy p = linear(obs_dim, act_dim);
  p.weights_ = Matrix(static_cast<std::size_t>(act_dim), static_cast<std::size_t>(featurizer.num_features()));
  p.featurizer_ = std::move(featurizer);
  return p;
}

Vec Policy::parameters() const {
  Vec theta;
  theta.reserve(static_cast<std::size_t>(param_count()));
  theta.insert(theta.end(), weights_.data().begin(), weights_.data().end());
  theta.insert(theta.end(), bias_.begin(), bias_.end());
  theta.insert(theta.end(), log_std_.begin(), log_std_.end());
  return theta;
}

void Policy::set_parameters(std::span<const double> theta) {
  if (theta.size() != static_cast<std::size_t>(param_count())) {
    throw ContractViolation("set_parameters: got " + std::to_string(theta.size()) + " values, expected " +
                            std::to_string(param_count()));
  }
  auto it = theta.begin();
  std::copy_n(it, weights_.size(), weights_.data().begin());
  it += static_cast<std::ptrdiff_t>(weights_.size());
  std::copy_n(it, bias_.size(), bias_.begin());
  it += static_cast<std::ptrdiff_t>(bias_.size());
  std::copy_n(it, log_std_.size(), log_std_.begin());
}

void Policy::clamp_log_std() {
  for (double& l : log_std_) l = std::clamp(l, kMinLogStd, kMaxLogStd);
}

bool Policy::same_architecture(const Policy& other) const {
  if (obs_dim_ != other.obs_dim_ || act_dim_ != other.act_dim_ || is_rbf() != other.is_rbf()) return false;
  return !is_rbf() || *featurizer_ == *other.featurizer_;
}

void Policy::check_obs(std::span<const double> obs) const {
  if (obs.size() != static_cast<std::size_t>(obs_dim_)) {
    throw ContractViolation("policy: observation has " + std::to_string(obs.size()) + " entries, expected " +
                            std::to_string(obs_dim_));
  }
}

void Policy::check_action(std::span<const double> action) const {
  if (action.size() != static_cast<std::size_t>(act_dim_)) {
    throw ContractViolation("policy: action has " + std::to_string(action.size()) + " entries, expected " +
                            std::to_string(act_dim_));
  }
}

void Policy::features(std::span<const double> obs, std::span<double> out) const {
  check_obs(obs);
  if (featurizer_) {
    rbf_features(*featurizer_, obs, out);
  } else {
    std::copy(obs.begin(), obs.end(), out.begin());
  }
}

Vec Policy::features(std::span<const double> obs) const {
  Vec y(static_cast<std::size_t>(feature_dim()));
  features(obs, y);
  return y;
}

Vec Policy::mean_action(std::span<const double> obs) const {
  const Vec y = features(obs);
  Vec mu(bias_);
  for (std::size_t d = 0; d < mu.size(); ++d) mu[d] += dot(weights_.row(d), y);
  return mu;
}

Policy::Sample Policy::sample(std::span<const double> obs, Rng& rng) const {
  Sample s;
  s.action = mean_action(obs);
  for (std::size_t d = 0; d < s.action.size(); ++d) s.action[d] += std::exp(log_std_[d]) * rng.normal();
  s.log_prob = log_prob(obs, s.action);
  return s;
}

double Policy::log_prob(std::span<const double> obs, std::span<const double> action) const {
  check_action(action);
  const Vec mu = mean_action(obs);
  double total = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    const double z = (action[d] - mu[d]) / std::exp(log_std_[d]);
    total += z * z + 2.0 * log_std_[d] + kLog2Pi;
  }
  return -0.5 * total;
}

Vec Policy::grad_log_prob(std::span<const double> obs, std::span<const double> action) const {
  check_action(action);
  const Vec y = features(obs);
  Vec g(static_cast<std::size_t>(param_count()));
  grad_log_prob_from_features(y, action, g);
  return g;
}

void Policy::grad_log_prob_from_features(std::span<const double> y, std::span<const double> action,
                                         std::span<double> out) const {
  const std::size_t nf = y.size();
  const std::size_t na = static_cast<std::size_t>(act_dim_);
  const std::size_t bias_at = na * nf;
  const std::size_t log_std_at = bias_at + na;
  for (std::size_t d = 0; d < na; ++d) {
    const double mu = bias_[d] + dot(weights_.row(d), y);
    const double inv_var = std::exp(-2.0 * log_std_[d]);
    const double diff = action[d] - mu;
    const double coeff = diff * inv_var;
    for (std::size_t j = 0; j < nf; ++j) out[d * nf + j] = coeff * y[j];
    out[bias_at + d] = coeff;
    out[log_std_at + d] = diff * diff * inv_var - 1.0;
  }
}

double kl_mean(const Policy& p, const Policy& q, std::span<const Vec> states) {
  if (!p.same_architecture(q)) throw ContractViolation("kl_mean: policies have different architectures");
  if (states.empty()) return 0.0;
  double total = 0.0;
  for (const Vec& s : states) {
    const Vec mp = p.mean_action(s);
    const Vec mq = q.mean_action(s);
    for (std::size_t d = 0; d < mp.size(); ++d) {
      const double var_p = std::exp(2.0 * p.log_std()[d]);
      const double var_q = std::exp(2.0 * q.log_std()[d]);
      const double diff = mp[d] - mq[d];
      total += (q.log_std()[d] - p.log_std()[d]) + (var_p + diff * diff) / (2.0 * var_q) - 0.5;
    }
  }
  return total / static_cast<double>(states.size());
}

}  // namespace natgrad
