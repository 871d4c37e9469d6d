#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "natgrad/envs.hpp"
#include "natgrad/estimation.hpp"
#include "natgrad/kernels.hpp"
#include "natgrad/numerics.hpp"
#include "natgrad/policies.hpp"

namespace natgrad {

struct TrainConfig {
  double delta = 0.05;
  double gamma = 0.995;
  double lambda = 0.97;
  int trajectories_per_iter = 20;
  int iterations = 100;
  CgSettings cg;
  std::uint64_t seed = 0;
  bool standardize_advantages = true;
  double baseline_ridge = 1e-5;
  int eval_episodes = 10;

  void validate() const;
};

/// Batch size used when a config does not set one.
int default_trajectories_per_iter(EnvId id);

struct IterationRecord {
  int iteration = 0;  // 1-based
  long episodes = 0;  // training episodes consumed so far, iteration * N
  double mean_return_stoc = 0.0;
  double mean_return_mean = 0.0;
  double sample_kl = 0.0;
  double step_quadratic_form = 0.0;  // dtheta' (F + damping I) dtheta
  double cg_residual = 0.0;
  int cg_iterations = 0;
  double wallclock_s = 0.0;
  bool degenerate_step = false;
  int baseline_fit_iteration = 0;  // 1-based iteration whose data fitted the baseline; 0 = initial zero baseline
};

/// Receives each record together with the policy produced by that iteration's update.
using RecordSink = std::function<void(const IterationRecord&, const Policy&)>;

/// Every trajectory's score-advantage products are averaged
/// over its own length, then averaged over trajectories.
Vec policy_gradient(const kernels::ScoreMatrix& scores, std::span<const Vec> advantages);
Vec policy_gradient(const Policy& policy, std::span<const Trajectory> batch, std::span<const Vec> advantages);

Vec fisher_vector_product(const Policy& policy, std::span<const Trajectory> batch, std::span<const double> v,
                          double damping);

struct NaturalStep {
  Vec delta_theta;
  Vec direction;  // CG solution x ~ F^-1 g
  double step_size = 0.0;  // sqrt(delta / g'x)
  double g_dot_x = 0.0;
  CgResult cg;
  bool degenerate = false;  // g'x <= 1e-12: no update taken
};

/// Normalized natural gradient step; the damping of `cg` is applied by the solver.
NaturalStep natural_step(std::span<const double> g, const LinearOperator& fisher, double delta,
                         const CgSettings& cg);

struct TrainResult {
  Policy policy;
  std::vector<IterationRecord> records;
};

/// Policy search with the normalized natural gradient.
///
/// Iteration k rolls out N stochastic trajectories of the current policy,
/// computes GAE advantages against the baseline fitted on iteration k-1,
/// takes one normalized step and then refits the baseline on iteration k's
/// data. Training randomness comes from Rng(seed).split(k); evaluation uses
/// a separate stream. `record_wallclock = false` writes zero timings.
TrainResult train(const TrainConfig& config, const EnvSpec& env, Policy initial, const RecordSink& sink = {},
                  bool record_wallclock = true);

struct EvalResult {
  double mean_return = 0.0;
  Vec returns;
};

/// Full-horizon rollouts without learning; episode i uses rng.split(i).
EvalResult evaluate(const Policy& policy, const EnvSpec& env, int episodes, ActionMode mode, const Rng& rng,
                    std::span<const PerturbationEvent> perturbations = {});

/// Stream used for the per-iteration mean-mode evaluation.
Rng evaluation_stream(std::uint64_t seed, int iteration);

}  // namespace natgrad
