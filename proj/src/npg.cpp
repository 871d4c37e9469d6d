#include "natgrad/npg.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "natgrad/errors.hpp"

namespace natgrad {

void TrainConfig::validate() const {
  if (!(delta > 0.0)) throw ContractViolation("TrainConfig: delta must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractViolation("TrainConfig: gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractViolation("TrainConfig: lambda must lie in [0, 1]");
  if (trajectories_per_iter <= 0) throw ContractViolation("TrainConfig: trajectories_per_iter must be positive");
  if (iterations < 0) throw ContractViolation("TrainConfig: iterations must be nonnegative");
  if (!(baseline_ridge > 0.0)) throw ContractViolation("TrainConfig: baseline_ridge must be positive");
  if (eval_episodes < 0) throw ContractViolation("TrainConfig: eval_episodes must be nonnegative");
  cg.validate();
}

int default_trajectories_per_iter(EnvId id) {
  switch (id) {
    case EnvId::point_mass: return 20;
    case EnvId::pendulum: return 40;
    case EnvId::cartpole_swingup: return 40;
    case EnvId::hopper1d: return 50;
  }
  return 20;
}

Vec policy_gradient(const kernels::ScoreMatrix& scores, std::span<const Vec> advantages) {
  const std::size_t n_traj = scores.traj_len.size();
  if (n_traj == 0) throw ContractViolation("policy_gradient: empty batch");
  if (advantages.size() != n_traj) throw ContractViolation("policy_gradient: advantages not aligned with batch");
  Vec weights;
  weights.reserve(scores.samples());
  for (std::size_t n = 0; n < n_traj; ++n) {
    const auto len = static_cast<std::size_t>(scores.traj_len[n]);
    if (advantages[n].size() != len) throw ContractViolation("policy_gradient: advantages not aligned with batch");
    const double scale = 1.0 / (static_cast<double>(len) * static_cast<double>(n_traj));
    for (double a : advantages[n]) weights.push_back(a * scale);
  }
  Vec g(scores.params());
  kernels::weighted_score_sum(scores, weights, g);
  return g;
}

Vec policy_gradient(const Policy& policy, std::span<const Trajectory> batch, std::span<const Vec> advantages) {
  if (batch.empty()) throw ContractViolation("policy_gradient: empty batch");
  return policy_gradient(kernels::compute_scores(policy, batch), advantages);
}

Vec fisher_vector_product(const Policy& policy, std::span<const Trajectory> batch, std::span<const double> v,
                          double damping) {
  const auto scores = kernels::compute_scores(policy, batch);
  Vec out(scores.params());
  kernels::fisher_vector_product(scores, v, damping, out);
  return out;
}

NaturalStep natural_step(std::span<const double> g, const LinearOperator& fisher, double delta,
                         const CgSettings& cg) {
  if (!(delta > 0.0)) throw ContractViolation("natural_step: delta must be positive");
  NaturalStep s;
  s.delta_theta.assign(g.size(), 0.0);
  s.cg = cg_solve(fisher, g, cg);
  s.direction = s.cg.solution;
  s.g_dot_x = dot(g, s.direction);
  if (!(s.g_dot_x > 1e-12)) {
    s.degenerate = true;
    return s;
  }
  s.step_size = std::sqrt(delta / s.g_dot_x);
  for (std::size_t i = 0; i < g.size(); ++i) s.delta_theta[i] = s.step_size * s.direction[i];
  return s;
}

Rng evaluation_stream(std::uint64_t seed, int iteration) {
  return Rng(seed).split(0xe7a1ULL).split(static_cast<std::uint64_t>(iteration));
}

namespace {

Rng training_stream(std::uint64_t seed, int iteration) {
  return Rng(seed).split(0x7a1aULL).split(static_cast<std::uint64_t>(iteration));
}

}  // namespace

TrainResult train(const TrainConfig& config, const EnvSpec& env, Policy initial, const RecordSink& sink,
                  bool record_wallclock) {
  config.validate();
  env.validate();
  if (initial.obs_dim() != env.obs_dim || initial.act_dim() != env.act_dim) {
    throw ContractViolation("train: policy shape does not match environment");
  }

  TrainResult result{std::move(initial), {}};
  Policy& policy = result.policy;
  BaselineModel baseline = BaselineModel::zero(env.obs_dim);
  const auto start = std::chrono::steady_clock::now();

  for (int k = 0; k < config.iterations; ++k) {
    // Rollouts of the current stochastic policy.
    const auto batch = kernels::collect_rollouts(policy, env, config.trajectories_per_iter,
                                                 training_stream(config.seed, k), ActionMode::stochastic);
    const auto scores = kernels::compute_scores(policy, batch);

    // Advantages use only the baseline fitted on the previous iteration.
    if (baseline.fitted_on_iteration != k - 1) {
      throw std::logic_error("train: baseline fitted on iteration " + std::to_string(baseline.fitted_on_iteration) +
                             " used at iteration " + std::to_string(k));
    }
    std::vector<Vec> advantages;
    advantages.reserve(batch.size());
    for (const auto& traj : batch) advantages.push_back(gae_advantages(traj, baseline, config.gamma, config.lambda));
    if (config.standardize_advantages) {
      Vec flat;
      flat.reserve(scores.samples());
      for (const auto& a : advantages) flat.insert(flat.end(), a.begin(), a.end());
      const Vec standardized = standardize_advantages(flat);
      std::size_t i = 0;
      for (auto& a : advantages)
        for (double& v : a) v = standardized[i++];
    }

    const Vec g = policy_gradient(scores, advantages);
    const LinearOperator fisher = [&scores](std::span<const double> in, std::span<double> out) {
      kernels::fisher_vector_product(scores, in, 0.0, out);
    };
    NaturalStep step;
    try {
      step = natural_step(g, fisher, config.delta, config.cg);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(std::string("natural step failed: ") + e.what(), k);
    }

    IterationRecord rec;
    rec.iteration = k + 1;
    rec.episodes = static_cast<long>(k + 1) * config.trajectories_per_iter;
    rec.baseline_fit_iteration = baseline.fitted_on_iteration + 1;
    rec.degenerate_step = step.degenerate;
    rec.cg_residual = step.cg.residual_norm;
    rec.cg_iterations = step.cg.iterations;
    {
      Vec f_step(scores.params());
      kernels::fisher_vector_product(scores, step.delta_theta, config.cg.damping, f_step);
      rec.step_quadratic_form = dot(step.delta_theta, f_step);
    }
    double total = 0.0;
    for (const auto& traj : batch) total += traj.total_reward();
    rec.mean_return_stoc = total / static_cast<double>(batch.size());
    if (config.eval_episodes > 0) {
      rec.mean_return_mean =
          evaluate(policy, env, config.eval_episodes, ActionMode::mean, evaluation_stream(config.seed, k)).mean_return;
    }

    Policy next = policy;
    Vec theta = next.parameters();
    axpy(1.0, step.delta_theta, theta);
    if (!all_finite(theta)) throw NumericalFailure("train: parameters became non-finite", k);
    next.set_parameters(theta);
    next.clamp_log_std();

    std::vector<Vec> states;
    states.reserve(scores.samples());
    for (const auto& traj : batch)
      for (std::size_t t = 0; t < traj.actions.size(); ++t) states.push_back(traj.observations[t]);
    rec.sample_kl = kl_mean(policy, next, states);
    policy = std::move(next);

    baseline = fit_baseline(batch, config.gamma, config.baseline_ridge, k);

    if (record_wallclock) {
      rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (sink) sink(rec, policy);
    result.records.push_back(rec);
  }
  return result;
}

EvalResult evaluate(const Policy& policy, const EnvSpec& env, int episodes, ActionMode mode, const Rng& rng,
                    std::span<const PerturbationEvent> perturbations) {
  if (episodes < 1) throw ContractViolation("evaluate: episodes must be at least 1");
  const auto trajs = kernels::collect_rollouts(policy, env, episodes, rng, mode, perturbations);
  EvalResult r;
  for (const auto& t : trajs) r.returns.push_back(t.total_reward());
  double s = 0.0;
  for (double x : r.returns) s += x;
  r.mean_return = s / static_cast<double>(episodes);
  return r;
}

}  // namespace natgrad
