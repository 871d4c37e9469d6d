#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "natgrad/numerics.hpp"

namespace natgrad {

enum class EnvId { point_mass, pendulum, cartpole_swingup, hopper1d };
enum class InitMode { narrow, diverse };

std::string_view to_string(EnvId id);
std::string_view to_string(InitMode mode);
EnvId parse_env_id(std::string_view text);
InitMode parse_init_mode(std::string_view text);

/// Static description of one environment instance.
///
/// `make_env_spec` fills every field from the per-environment table; dt,
/// horizon and damping may be overridden afterwards (damping only affects
/// the pendulum).
struct EnvSpec {
  EnvId id = EnvId::point_mass;
  int obs_dim = 0;
  int act_dim = 0;
  int force_dim = 0;
  double dt = 0.0;
  int horizon = 0;
  bool termination_enabled = false;
  InitMode init_mode = InitMode::narrow;
  double damping = 0.0;

  void validate() const;
  bool operator==(const EnvSpec&) const = default;
};

EnvSpec make_env_spec(EnvId id, InitMode mode = InitMode::narrow, bool termination = false);

/// Infers the environment from policy dimensions; each env has a unique (obs, act) pair.
std::optional<EnvId> env_from_dims(int obs_dim, int act_dim);

/// Largest perturbation magnitude accepted from interactive users.
double force_cap(EnvId id);

struct EnvState {
  Vec q;
  Vec v;
  int t = 0;
  bool terminated = false;
  int low_steps = 0;      // hopper1d: consecutive steps below the crash height
  double leg_action = 0;  // hopper1d: last applied rest-length offset

  bool operator==(const EnvState&) const = default;
};

/// External generalized force applied during a time window.
///
/// The window is resolved to whole steps: the force acts on steps t with
/// first <= t < first + count, where first = ceil(start_time / dt) and
/// count = ceil(duration / dt), each up to a 1e-9 slack so that exact
/// multiples of dt are not pushed to the next step.
struct PerturbationEvent {
  Vec force;
  double start_time = 0.0;
  double duration = 0.0;

  bool active_at(int step, double dt) const;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool terminated = false;
};

EnvState reset(const EnvSpec& spec, Rng& rng);

StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const double> action,
                std::span<const PerturbationEvent> perturbations = {});
StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const double> action,
                const std::optional<PerturbationEvent>& perturbation);

Vec observe(const EnvSpec& spec, const EnvState& state);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

/// Pendulum mechanical energy 0.5 m l^2 w^2 + m g l cos(theta).
double pendulum_energy(const EnvState& state);

}  // namespace natgrad
