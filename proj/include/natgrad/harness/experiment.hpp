#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "natgrad/harness/config.hpp"
#include "natgrad/npg.hpp"

namespace natgrad::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Learning curves
// ---------------------------------------------------------------------------

inline constexpr const char* kCurveHeader =
    "iteration,episodes,mean_return_stoc,mean_return_mean,sample_kl,step_quadratic_form,cg_residual,wallclock_s";

std::string format_curve_csv(std::span<const IterationRecord> records);
std::vector<IterationRecord> parse_curve_csv(std::string_view text);

struct AggregateRow {
  int iteration = 0;
  long episodes = 0;
  double stoc_mean = 0.0;
  double stoc_std = 0.0;
  double mean_mean = 0.0;
  double mean_std = 0.0;
  int seeds = 0;
};

/// Per-iteration mean and sample standard deviation across seeds.
std::vector<AggregateRow> aggregate_curves(std::span<const std::vector<IterationRecord>> per_seed);
std::string format_aggregate_csv(std::span<const AggregateRow> rows);
std::vector<AggregateRow> parse_aggregate_csv(std::string_view text);

/// Debug dump of one rollout: t, obs..., act..., reward, logprob.
std::string format_trajectory_csv(const Trajectory& traj);

// ---------------------------------------------------------------------------
// Training runs
// ---------------------------------------------------------------------------

/// Zero-mean initial policy. For rbf the bandwidth comes from 10 stochastic
/// rollouts of the zero policy and the featurizer draws from a seed-derived stream.
Policy make_initial_policy(const ExperimentConfig& config, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<IterationRecord> records;
  Policy final_policy;
};

struct ExperimentResult {
  fs::path dir;
  std::vector<SeedRun> runs;
  std::vector<AggregateRow> aggregate;
};

/// Trains every seed and writes, under <output_dir>/<name>/:
///   config.txt, aggregate.csv,
///   seed_<s>/curve.csv, seed_<s>/policy_iter_<kkkk>.txt, seed_<s>/policy_final.txt
/// The output directory is checked before any training starts.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

fs::path experiment_dir(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Episodes-to-threshold report
// ---------------------------------------------------------------------------

struct ThresholdCurve {
  std::string experiment;
  EnvId env = EnvId::point_mass;
  std::string architecture;
  std::vector<AggregateRow> rows;
};

struct ThresholdRow {
  EnvId env = EnvId::point_mass;
  std::string experiment;
  std::string architecture;
  double threshold = 0.0;
  std::optional<long> episodes;  // empty: not reached
};

/// Threshold = fraction of the final stochastic score of the env's linear run.
/// For a negative final score the threshold sits the same relative distance
/// below it: final - (1 - fraction) |final|, which equals fraction * final
/// whenever final >= 0. Throws ContractViolation when an env has no linear run.
double threshold_from_final(double final_score, double fraction);
std::vector<ThresholdRow> episodes_to_threshold(std::span<const ThresholdCurve> curves, double fraction = 0.9);

/// Reads every experiment directory directly under `dir` (config.txt + aggregate.csv).
std::vector<ThresholdCurve> load_threshold_curves(const fs::path& dir);
std::string format_threshold_csv(std::span<const ThresholdRow> rows);

// ---------------------------------------------------------------------------
// Perturbation sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  double magnitude = 0.0;
  Vec direction;
  int episodes = 0;
  double mean_return = 0.0;
  double progress = 0.0;
};

/// point_mass: final_goal_distance; pendulum and cartpole_swingup:
/// upright_fraction (|theta| < 0.25); hopper1d: high_fraction (z > 0.6).
std::string progress_metric_name(EnvId id);
double progress_metric(EnvId id, const Trajectory& traj);

/// Default directions: +/- each force axis.
std::vector<Vec> sweep_directions(const PerturbSweepSpec& sweep, const EnvSpec& env);

/// Mean-mode evaluation of every (magnitude, direction) cell. Episode i of
/// every cell uses the same stream Rng(seed).split(i), so a zero magnitude
/// reproduces the unperturbed evaluation exactly.
std::vector<SweepRow> perturb_sweep(const Policy& policy, const EnvSpec& env, const PerturbSweepSpec& sweep);
std::string format_sweep_csv(EnvId id, std::span<const SweepRow> rows);

// ---------------------------------------------------------------------------
// Feature-count study
// ---------------------------------------------------------------------------

struct StudyRow {
  std::string architecture;
  int num_features = 0;  // 0 for linear
  int param_count = 0;
  std::uint64_t seed = 0;
  double final_return_stoc = 0.0;
  double final_return_mean = 0.0;
};

struct StudySummaryRow {
  std::string architecture;
  int num_features = 0;
  int param_count = 0;
  double mean_final_stoc = 0.0;
  double std_final_stoc = 0.0;
  double mean_final_mean = 0.0;
  double std_final_mean = 0.0;
};

struct StudyResult {
  fs::path dir;
  std::vector<StudyRow> rows;
  std::vector<StudySummaryRow> summary;
};

/// Trains linear plus one rbf policy per count on the same seeds. Each
/// architecture becomes an experiment under <output_dir>/<name>/, next to
/// study.csv and study_summary.csv.
StudyResult feature_count_study(const ExperimentConfig& base, std::span<const int> counts,
                                std::ostream* log = nullptr);

void write_text_file(const fs::path& path, std::string_view text);
std::string read_text_file(const fs::path& path);

}  // namespace natgrad::harness
