#pragma once

// Data-parallel inner loops of training, each with a serial reference.
//
// Every OpenMP kernel partitions work so that each output element is reduced
// by exactly one thread in a fixed order; results are bit-identical to the
// serial reference for any thread count. The serial versions exist for
// tests and benchmarks.

#include <span>
#include <vector>

#include "natgrad/envs.hpp"
#include "natgrad/estimation.hpp"
#include "natgrad/numerics.hpp"
#include "natgrad/policies.hpp"

namespace natgrad {

enum class ActionMode { stochastic, mean };

/// Runs one full-horizon episode. The reset and all action noise draw from `rng`.
Trajectory rollout(const Policy& policy, const EnvSpec& spec, Rng rng, ActionMode mode,
                   std::span<const PerturbationEvent> perturbations = {});

namespace kernels {

int max_threads();

/// Per-sample score vectors stored parameter-major: row j holds d/dtheta_j
/// log pi(a_i | s_i) for every sample i, so both passes of the Fisher product
/// stream contiguous memory.
struct ScoreMatrix {
  Matrix by_param;            // param_count x sample_count
  std::vector<int> traj_of;   // trajectory index of each sample
  std::vector<int> traj_len;  // steps per trajectory

  std::size_t samples() const { return by_param.cols(); }
  std::size_t params() const { return by_param.rows(); }
  Vec sample(std::size_t i) const;
};

ScoreMatrix compute_scores(const Policy& policy, std::span<const Trajectory> batch);
ScoreMatrix compute_scores_serial(const Policy& policy, std::span<const Trajectory> batch);

/// (1/M) sum_i s_i (s_i . v) + damping v.
void fisher_vector_product(const ScoreMatrix& scores, std::span<const double> v, double damping,
                           std::span<double> out);
void fisher_vector_product_serial(const ScoreMatrix& scores, std::span<const double> v, double damping,
                                  std::span<double> out);

/// sum_i weight_i s_i.
void weighted_score_sum(const ScoreMatrix& scores, std::span<const double> weights, std::span<double> out);
void weighted_score_sum_serial(const ScoreMatrix& scores, std::span<const double> weights, std::span<double> out);

std::vector<Trajectory> collect_rollouts(const Policy& policy, const EnvSpec& spec, int count, const Rng& stream,
                                         ActionMode mode, std::span<const PerturbationEvent> perturbations = {});
std::vector<Trajectory> collect_rollouts_serial(const Policy& policy, const EnvSpec& spec, int count,
                                                const Rng& stream, ActionMode mode,
                                                std::span<const PerturbationEvent> perturbations = {});

double mean_pairwise_distance(std::span<const Vec> points);
double mean_pairwise_distance_serial(std::span<const Vec> points);

}  // namespace kernels
}  // namespace natgrad
