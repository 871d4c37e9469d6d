#include "natgrad/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "natgrad/errors.hpp"

namespace natgrad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGravity = 9.81;

namespace point_mass {
constexpr double goal_x = 1.0;
constexpr double goal_y = 1.0;
constexpr double max_accel = 1.0;
}  // namespace point_mass

namespace pendulum {
constexpr double mass = 1.0;
constexpr double length = 1.0;
constexpr double max_torque = 2.5;
constexpr double default_damping = 0.05;
}  // namespace pendulum

namespace cartpole {
constexpr double cart_mass = 1.0;
constexpr double pole_mass = 0.1;
constexpr double half_length = 0.5;
constexpr double max_force = 10.0;
constexpr double track_limit = 3.0;
}  // namespace cartpole

namespace hopper {
constexpr double mass = 1.0;
constexpr double rest_length = 0.5;
constexpr double max_leg = 0.25;
constexpr double stiffness = 200.0;
constexpr double leg_damping = 2.0;
constexpr double floor_height = 0.05;
constexpr double apex_target = 1.2;
constexpr double crash_height = 0.1;
constexpr int crash_steps = 50;
}  // namespace hopper

double clip(double x, double bound) { return std::clamp(x, -bound, bound); }

}  // namespace

std::string_view to_string(EnvId id) {
  switch (id) {
    case EnvId::point_mass: return "point_mass";
    case EnvId::pendulum: return "pendulum";
    case EnvId::cartpole_swingup: return "cartpole_swingup";
    case EnvId::hopper1d: return "hopper1d";
  }
  return "unknown";
}

std::string_view to_string(InitMode mode) { return mode == InitMode::narrow ? "narrow" : "diverse"; }

EnvId parse_env_id(std::string_view text) {
  for (EnvId id : {EnvId::point_mass, EnvId::pendulum, EnvId::cartpole_swingup, EnvId::hopper1d}) {
    if (text == to_string(id)) return id;
  }
  throw ContractViolation("unknown env_id '" + std::string(text) + "'");
}

InitMode parse_init_mode(std::string_view text) {
  if (text == "narrow") return InitMode::narrow;
  if (text == "diverse") return InitMode::diverse;
  throw ContractViolation("unknown init_mode '" + std::string(text) + "' (expected narrow or diverse)");
}

EnvSpec make_env_spec(EnvId id, InitMode mode, bool termination) {
  EnvSpec s;
  s.id = id;
  s.init_mode = mode;
  s.termination_enabled = termination;
  switch (id) {
    case EnvId::point_mass:
      s.obs_dim = 6, s.act_dim = 2, s.force_dim = 2, s.dt = 0.05, s.horizon = 100;
      break;
    case EnvId::pendulum:
      s.obs_dim = 3, s.act_dim = 1, s.force_dim = 1, s.dt = 0.05, s.horizon = 200;
      s.damping = pendulum::default_damping;
      break;
    case EnvId::cartpole_swingup:
      s.obs_dim = 5, s.act_dim = 1, s.force_dim = 1, s.dt = 0.02, s.horizon = 500;
      break;
    case EnvId::hopper1d:
      s.obs_dim = 4, s.act_dim = 1, s.force_dim = 1, s.dt = 0.01, s.horizon = 500;
      break;
  }
  return s;
}

void EnvSpec::validate() const {
  const EnvSpec table = make_env_spec(id, init_mode, termination_enabled);
  if (obs_dim != table.obs_dim || act_dim != table.act_dim || force_dim != table.force_dim) {
    throw ContractViolation("EnvSpec dimensions do not match " + std::string(to_string(id)));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractViolation("EnvSpec: dt must be positive");
  if (horizon <= 0) throw ContractViolation("EnvSpec: horizon must be positive");
  if (!(damping >= 0.0)) throw ContractViolation("EnvSpec: damping must be nonnegative");
}

std::optional<EnvId> env_from_dims(int obs_dim, int act_dim) {
  for (EnvId id : {EnvId::point_mass, EnvId::pendulum, EnvId::cartpole_swingup, EnvId::hopper1d}) {
    const EnvSpec s = make_env_spec(id);
    if (s.obs_dim == obs_dim && s.act_dim == act_dim) return id;
  }
  return std::nullopt;
}

double force_cap(EnvId id) {
  switch (id) {
    case EnvId::point_mass: return 3.0;
    case EnvId::pendulum: return 5.0;
    case EnvId::cartpole_swingup: return 20.0;
    case EnvId::hopper1d: return 30.0;
  }
  return 0.0;
}

double wrap_angle(double theta) {
  double r = std::fmod(theta + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  double w = r - kPi;
  if (w <= -kPi) w = kPi;
  return w;
}

double pendulum_energy(const EnvState& state) {
  using namespace pendulum;
  const double w = state.v[0];
  return 0.5 * mass * length * length * w * w + mass * kGravity * length * std::cos(state.q[0]);
}

bool PerturbationEvent::active_at(int step_index, double dt) const {
  constexpr double slack = 1e-9;
  const auto first = static_cast<long long>(std::ceil(start_time / dt - slack));
  const auto count = static_cast<long long>(std::ceil(duration / dt - slack));
  return count > 0 && step_index >= first && step_index < first + count;
}

EnvState reset(const EnvSpec& spec, Rng& rng) {
  spec.validate();
  EnvState s;
  const bool narrow = spec.init_mode == InitMode::narrow;
  switch (spec.id) {
    case EnvId::point_mass:
      if (narrow) {
        s.q = {-1.0 + 0.1 * rng.normal(), -1.0 + 0.1 * rng.normal()};
        s.v = {0.0, 0.0};
      } else {
        s.q = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
        s.v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      }
      break;
    case EnvId::pendulum:
      if (narrow) {
        s.q = {wrap_angle(0.05 * rng.normal())};
        s.v = {0.05 * rng.normal()};
      } else {
        s.q = {wrap_angle(rng.uniform(-kPi, kPi))};
        s.v = {rng.uniform(-1.0, 1.0)};
      }
      break;
    case EnvId::cartpole_swingup:
      if (narrow) {
        s.q = {0.0, wrap_angle(0.05 * rng.normal())};
        s.v = {0.0, 0.0};
      } else {
        const double x = rng.uniform(-1.0, 1.0);
        const double theta = wrap_angle(rng.uniform(-kPi, kPi));
        s.q = {x, theta};
        s.v = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
      }
      break;
    case EnvId::hopper1d:
      if (narrow) {
        s.q = {0.9};
        s.v = {0.0};
      } else {
        s.q = {rng.uniform(hopper::floor_height, 1.0)};
        s.v = {rng.uniform(-1.0, 1.0)};
      }
      break;
  }
  return s;
}

StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const double> action,
                std::span<const PerturbationEvent> perturbations) {
  if (action.size() != static_cast<std::size_t>(spec.act_dim)) {
    throw ContractViolation("step: action has " + std::to_string(action.size()) + " entries, expected " +
                            std::to_string(spec.act_dim));
  }
  if (!all_finite(action)) throw ContractViolation("step: action is not finite");
  if (state.t >= spec.horizon) throw ContractViolation("step: state is already at the horizon");

  StepResult out;
  out.next = state;
  out.next.t = state.t + 1;
  if (state.terminated) {
    out.terminated = true;
    return out;
  }

  Vec force(static_cast<std::size_t>(spec.force_dim), 0.0);
  for (const auto& p : perturbations) {
    if (p.force.size() != force.size()) {
      throw ContractViolation("step: perturbation force has " + std::to_string(p.force.size()) +
                              " entries, expected " + std::to_string(force.size()));
    }
    if (p.active_at(state.t, spec.dt)) axpy(1.0, p.force, force);
  }

  const double dt = spec.dt;
  EnvState& n = out.next;
  bool failed = false;

  switch (spec.id) {
    case EnvId::point_mass: {
      const double ax = clip(action[0], point_mass::max_accel);
      const double ay = clip(action[1], point_mass::max_accel);
      n.v[0] += dt * (ax + force[0]);
      n.v[1] += dt * (ay + force[1]);
      n.q[0] += dt * n.v[0];
      n.q[1] += dt * n.v[1];
      const double dx = n.q[0] - point_mass::goal_x;
      const double dy = n.q[1] - point_mass::goal_y;
      out.reward = -(dx * dx + dy * dy) - 0.001 * (ax * ax + ay * ay);
      break;
    }
    case EnvId::pendulum: {
      using namespace pendulum;
      const double u = clip(action[0], max_torque);
      const double theta = state.q[0];
      const double w = state.v[0];
      const double accel =
          (u + force[0] - spec.damping * w - mass * kGravity * length * std::sin(theta - kPi)) / (mass * length * length);
      n.v[0] = w + dt * accel;
      n.q[0] = wrap_angle(theta + dt * n.v[0]);
      const double th = n.q[0];
      out.reward = -th * th - 0.1 * n.v[0] * n.v[0] - 0.001 * u * u;
      failed = std::abs(th) > kPi / 2.0;
      break;
    }
    case EnvId::cartpole_swingup: {
      using namespace cartpole;
      const double u = clip(action[0], max_force);
      const double theta = state.q[1];
      const double w = state.v[1];
      const double total_mass = cart_mass + pole_mass;
      const double sin_t = std::sin(theta);
      const double cos_t = std::cos(theta);
      const double temp = (u + force[0] + pole_mass * half_length * w * w * sin_t) / total_mass;
      const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                               (half_length * (4.0 / 3.0 - pole_mass * cos_t * cos_t / total_mass));
      const double x_acc = temp - pole_mass * half_length * theta_acc * cos_t / total_mass;
      n.v[0] += dt * x_acc;
      n.v[1] += dt * theta_acc;
      n.q[0] += dt * n.v[0];
      n.q[1] = wrap_angle(theta + dt * n.v[1]);
      if (std::abs(n.q[0]) > track_limit) {
        n.q[0] = std::copysign(track_limit, n.q[0]);
        n.v[0] = 0.0;
      }
      const double x = n.q[0];
      out.reward = std::cos(n.q[1]) - 0.01 * x * x - 0.001 * u * u;
      failed = std::abs(n.q[1]) > kPi / 2.0;
      break;
    }
    case EnvId::hopper1d: {
      using namespace hopper;
      const double leg = clip(action[0], max_leg);
      const double rest = rest_length + leg;
      const double z = state.q[0];
      const double zd = state.v[0];
      double ground = 0.0;
      if (z <= rest) ground = std::max(0.0, stiffness * (rest - z) - leg_damping * zd);
      const double accel = (ground + force[0]) / mass - kGravity;
      n.v[0] = zd + dt * accel;
      n.q[0] = z + dt * n.v[0];
      if (n.q[0] < floor_height) {
        n.q[0] = floor_height;
        n.v[0] = std::max(0.0, n.v[0]);
      }
      n.leg_action = leg;
      n.low_steps = n.q[0] < crash_height ? state.low_steps + 1 : 0;
      const double err = apex_target - n.q[0];
      out.reward = -err * err - 0.001 * leg * leg;
      failed = n.low_steps >= crash_steps;
      break;
    }
  }

  if (!all_finite(n.q) || !all_finite(n.v)) throw NumericalFailure("step: state became non-finite", state.t);
  if (spec.termination_enabled && failed) {
    n.terminated = true;
    out.terminated = true;
  }
  return out;
}

StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const double> action,
                const std::optional<PerturbationEvent>& perturbation) {
  if (perturbation) return step(spec, state, action, std::span<const PerturbationEvent>(&*perturbation, 1));
  return step(spec, state, action, std::span<const PerturbationEvent>{});
}

Vec observe(const EnvSpec& spec, const EnvState& s) {
  switch (spec.id) {
    case EnvId::point_mass:
      return {s.q[0], s.q[1], s.v[0], s.v[1], point_mass::goal_x - s.q[0], point_mass::goal_y - s.q[1]};
    case EnvId::pendulum:
      return {std::sin(s.q[0]), std::cos(s.q[0]), s.v[0]};
    case EnvId::cartpole_swingup:
      return {s.q[0], std::sin(s.q[1]), std::cos(s.q[1]), s.v[0], s.v[1]};
    case EnvId::hopper1d: {
      const double compression = hopper::rest_length + s.leg_action - s.q[0];
      return {s.q[0], s.v[0], compression >= 0.0 ? 1.0 : 0.0, compression};
    }
  }
  return {};
}

}  // namespace natgrad
