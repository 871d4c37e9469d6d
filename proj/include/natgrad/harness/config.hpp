#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "natgrad/envs.hpp"
#include "natgrad/npg.hpp"

namespace natgrad::harness {

enum class Architecture { linear, rbf };

/// Everything one `train` invocation needs.
///
/// On disk this is flat `key = value` text with `#` comments. Unknown and
/// duplicate keys are rejected; `name` and `env` are required and every
/// other key has a default. `horizon = 0` and `trajectories_per_iter = 0`
/// mean "use the environment's default".
struct ExperimentConfig {
  std::string name;
  EnvId env = EnvId::point_mass;
  InitMode init_mode = InitMode::narrow;
  bool termination = false;
  int horizon = 0;

  Architecture policy = Architecture::linear;
  int num_features = 100;
  double bandwidth_floor = 1e-3;

  TrainConfig train;  // train.seed is ignored; seeds come from `seeds`
  std::vector<std::uint64_t> seeds{0, 1, 2};

  std::string output_dir = "runs";
  int checkpoint_every = 10;
  bool record_wallclock = true;

  EnvSpec env_spec() const;
  TrainConfig train_config(std::uint64_t seed) const;
  std::string architecture_label() const;

  bool operator==(const ExperimentConfig&) const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

/// Perturbation sweep grid: every magnitude is paired with every unit direction.
struct PerturbSweepSpec {
  std::vector<double> magnitudes{0.0, 1.0, 3.0, 5.0};
  std::vector<Vec> directions;  // normalized on parse; empty means +/- each axis
  double start_time = 0.0;
  double duration = 0.5;
  int episodes = 10;
  InitMode init_mode = InitMode::narrow;
  std::uint64_t seed = 0;
};

/// Keys: magnitudes = 0,3,5 ; directions = 1,0;0,1 ; start_time ; duration ;
/// episodes ; init_mode ; seed.
PerturbSweepSpec parse_sweep_spec(std::string_view text);
PerturbSweepSpec load_sweep_spec(const std::string& path);

/// %.17g: 17 significant digits, parses back to the same double.
std::string format_double(double value);

}  // namespace natgrad::harness
