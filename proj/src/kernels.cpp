#include "natgrad/kernels.hpp"

#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "natgrad/errors.hpp"

namespace natgrad {

Trajectory rollout(const Policy& policy, const EnvSpec& spec, Rng rng, ActionMode mode,
                   std::span<const PerturbationEvent> perturbations) {
  Trajectory traj;
  traj.horizon = spec.horizon;
  const auto n = static_cast<std::size_t>(spec.horizon);
  traj.observations.reserve(n + 1);
  traj.actions.reserve(n);
  traj.rewards.reserve(n);
  traj.log_probs.reserve(n);

  EnvState state = reset(spec, rng);
  traj.observations.push_back(observe(spec, state));
  for (int t = 0; t < spec.horizon; ++t) {
    const Vec& obs = traj.observations.back();
    Vec action;
    double log_prob;
    if (mode == ActionMode::stochastic) {
      auto s = policy.sample(obs, rng);
      action = std::move(s.action);
      log_prob = s.log_prob;
    } else {
      action = policy.mean_action(obs);
      log_prob = policy.log_prob(obs, action);
    }
    StepResult r = step(spec, state, action, perturbations);
    if (r.terminated && !traj.terminated_at && !state.terminated) traj.terminated_at = t;
    state = std::move(r.next);
    traj.actions.push_back(std::move(action));
    traj.rewards.push_back(r.reward);
    traj.log_probs.push_back(log_prob);
    traj.observations.push_back(observe(spec, state));
  }
  return traj;
}

namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Vec ScoreMatrix::sample(std::size_t i) const {
  Vec s(params());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = by_param(j, i);
  return s;
}

namespace {

ScoreMatrix allocate_scores(const Policy& policy, std::span<const Trajectory> batch) {
  ScoreMatrix sm;
  std::size_t total = 0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const int len = batch[n].length();
    sm.traj_len.push_back(len);
    for (int t = 0; t < len; ++t) sm.traj_of.push_back(static_cast<int>(n));
    total += static_cast<std::size_t>(len);
  }
  sm.by_param = Matrix(static_cast<std::size_t>(policy.param_count()), total);
  return sm;
}

std::vector<std::size_t> sample_offsets(std::span<const Trajectory> batch) {
  std::vector<std::size_t> offsets(batch.size() + 1, 0);
  for (std::size_t n = 0; n < batch.size(); ++n) offsets[n + 1] = offsets[n] + batch[n].rewards.size();
  return offsets;
}

void score_one(const Policy& policy, const Trajectory& traj, std::size_t first, Matrix& out) {
  Vec y(static_cast<std::size_t>(policy.feature_dim()));
  Vec g(static_cast<std::size_t>(policy.param_count()));
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    policy.features(traj.observations[t], y);
    policy.grad_log_prob_from_features(y, traj.actions[t], g);
    for (std::size_t j = 0; j < g.size(); ++j) out(j, first + t) = g[j];
  }
}

void check_fvp_shapes(const ScoreMatrix& scores, std::span<const double> v, std::span<double> out) {
  if (v.size() != scores.params() || out.size() != scores.params()) {
    throw ContractViolation("fisher_vector_product: vector has " + std::to_string(v.size()) +
                            " entries, expected " + std::to_string(scores.params()));
  }
  if (scores.samples() == 0) throw ContractViolation("fisher_vector_product: empty batch");
}

}  // namespace

ScoreMatrix compute_scores(const Policy& policy, std::span<const Trajectory> batch) {
  ScoreMatrix sm = allocate_scores(policy, batch);
  const auto offsets = sample_offsets(batch);
  const auto count = static_cast<long>(batch.size());
#pragma omp parallel for schedule(static)
  for (long n = 0; n < count; ++n) {
    score_one(policy, batch[static_cast<std::size_t>(n)], offsets[static_cast<std::size_t>(n)], sm.by_param);
  }
  return sm;
}

ScoreMatrix compute_scores_serial(const Policy& policy, std::span<const Trajectory> batch) {
  ScoreMatrix sm = allocate_scores(policy, batch);
  std::size_t i = 0;
  for (const Trajectory& traj : batch) {
    for (std::size_t t = 0; t < traj.actions.size(); ++t, ++i) {
      const Vec g = policy.grad_log_prob(traj.observations[t], traj.actions[t]);
      for (std::size_t j = 0; j < g.size(); ++j) sm.by_param(j, i) = g[j];
    }
  }
  return sm;
}

void fisher_vector_product(const ScoreMatrix& scores, std::span<const double> v, double damping,
                           std::span<double> out) {
  check_fvp_shapes(scores, v, out);
  const std::size_t m = scores.samples();
  const std::size_t p = scores.params();
  const Matrix& g = scores.by_param;
  Vec proj(m, 0.0);

  // proj_i = s_i . v, accumulated over parameters in ascending order.
  constexpr long kChunk = 1024;
  const long chunks = static_cast<long>((m + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(m, lo + kChunk);
    for (std::size_t j = 0; j < p; ++j) {
      const double vj = v[j];
      const double* row = g.row(j).data();
      for (std::size_t i = lo; i < hi; ++i) proj[i] += row[i] * vj;
    }
  }

  const double inv_m = 1.0 / static_cast<double>(m);
#pragma omp parallel for schedule(static)
  for (long jl = 0; jl < static_cast<long>(p); ++jl) {
    const auto j = static_cast<std::size_t>(jl);
    const double* row = g.row(j).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += row[i] * proj[i];
    out[j] = acc * inv_m + damping * v[j];
  }
}

void fisher_vector_product_serial(const ScoreMatrix& scores, std::span<const double> v, double damping,
                                  std::span<double> out) {
  check_fvp_shapes(scores, v, out);
  const std::size_t m = scores.samples();
  const std::size_t p = scores.params();
  Vec acc(p, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double proj = 0.0;
    for (std::size_t j = 0; j < p; ++j) proj += scores.by_param(j, i) * v[j];
    for (std::size_t j = 0; j < p; ++j) acc[j] += scores.by_param(j, i) * proj;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < p; ++j) out[j] = acc[j] * inv_m + damping * v[j];
}

void weighted_score_sum(const ScoreMatrix& scores, std::span<const double> weights, std::span<double> out) {
  if (weights.size() != scores.samples() || out.size() != scores.params()) {
    throw ContractViolation("weighted_score_sum: shape mismatch");
  }
  const std::size_t m = scores.samples();
#pragma omp parallel for schedule(static)
  for (long jl = 0; jl < static_cast<long>(scores.params()); ++jl) {
    const auto j = static_cast<std::size_t>(jl);
    const double* row = scores.by_param.row(j).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += row[i] * weights[i];
    out[j] = acc;
  }
}

void weighted_score_sum_serial(const ScoreMatrix& scores, std::span<const double> weights, std::span<double> out) {
  if (weights.size() != scores.samples() || out.size() != scores.params()) {
    throw ContractViolation("weighted_score_sum: shape mismatch");
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < scores.samples(); ++i) {
    for (std::size_t j = 0; j < scores.params(); ++j) out[j] += scores.by_param(j, i) * weights[i];
  }
}

std::vector<Trajectory> collect_rollouts(const Policy& policy, const EnvSpec& spec, int count, const Rng& stream,
                                         ActionMode mode, std::span<const PerturbationEvent> perturbations) {
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
  for (int n = 0; n < count; ++n) {
    out[static_cast<std::size_t>(n)] =
        rollout(policy, spec, stream.split(static_cast<std::uint64_t>(n)), mode, perturbations);
  }
  return out;
}

std::vector<Trajectory> collect_rollouts_serial(const Policy& policy, const EnvSpec& spec, int count,
                                                const Rng& stream, ActionMode mode,
                                                std::span<const PerturbationEvent> perturbations) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    out.push_back(rollout(policy, spec, stream.split(static_cast<std::uint64_t>(n)), mode, perturbations));
  }
  return out;
}

namespace {

double distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

double pair_count(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

}  // namespace

double mean_pairwise_distance(std::span<const Vec> points) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  Vec row_sums(n, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
  for (long il = 0; il < static_cast<long>(n); ++il) {
    const auto i = static_cast<std::size_t>(il);
    double acc = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) acc += distance(points[i], points[j]);
    row_sums[i] = acc;
  }
  double total = 0.0;
  for (double r : row_sums) total += r;
  return total / pair_count(n);
}

double mean_pairwise_distance_serial(std::span<const Vec> points) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) acc += distance(points[i], points[j]);
    total += acc;
  }
  return total / pair_count(n);
}

}  // namespace kernels
}  // namespace natgrad
