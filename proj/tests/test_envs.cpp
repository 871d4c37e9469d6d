#include <doctest.h>

#include <cmath>
#include <numbers>

#include "natgrad/envs.hpp"
#include "natgrad/errors.hpp"

using namespace natgrad;

namespace {

constexpr EnvId kAll[] = {EnvId::point_mass, EnvId::pendulum, EnvId::cartpole_swingup, EnvId::hopper1d};

EnvState make_state(Vec q, Vec v) {
  EnvState s;
  s.q = std::move(q);
  s.v = std::move(v);
  return s;
}

}  // namespace

TEST_CASE("env table dims and lookup") {
  CHECK(make_env_spec(EnvId::point_mass).obs_dim == 6);
  CHECK(make_env_spec(EnvId::point_mass).act_dim == 2);
  CHECK(make_env_spec(EnvId::pendulum).obs_dim == 3);
  CHECK(make_env_spec(EnvId::cartpole_swingup).obs_dim == 5);
  CHECK(make_env_spec(EnvId::hopper1d).obs_dim == 4);
  for (EnvId id : kAll) {
    const EnvSpec s = make_env_spec(id);
    CHECK(env_from_dims(s.obs_dim, s.act_dim) == id);
    CHECK(parse_env_id(to_string(id)) == id);
    CHECK(s.dt > 0.0);
    CHECK(s.horizon > 0);
  }
  CHECK_FALSE(env_from_dims(7, 7).has_value());
  CHECK_THROWS_AS(parse_env_id("ant"), ContractViolation);

  EnvSpec bad = make_env_spec(EnvId::pendulum);
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = make_env_spec(EnvId::pendulum);
  bad.obs_dim = 4;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("reset distributions") {
  Rng rng(3);
  const EnvSpec pm = make_env_spec(EnvId::point_mass);
  int inside = 0;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const EnvState s = reset(pm, rng);
    if (std::abs(s.q[0] + 1.0) <= 0.3 && std::abs(s.q[1] + 1.0) <= 0.3) ++inside;
    sum += s.q[0];
    sq += (s.q[0] + 1.0) * (s.q[0] + 1.0);
    CHECK(s.v == Vec{0.0, 0.0});
    CHECK(s.t == 0);
  }
  // 3 sigma per axis holds for 99.46% of draws.
  CHECK(inside >= 1960);
  CHECK(std::abs(sum / 2000 + 1.0) <= 4.0 * 0.1 / std::sqrt(2000.0));
  CHECK(std::sqrt(sq / 2000) == doctest::Approx(0.1).epsilon(0.1));
  const EnvSpec pd = make_env_spec(EnvId::pendulum, InitMode::diverse);
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const EnvState s = reset(pd, rng);
    CHECK(s.q[0] > -std::numbers::pi);
    CHECK(s.q[0] <= std::numbers::pi);
    CHECK(std::abs(s.v[0]) <= 1.0);
    lo = std::min(lo, s.q[0]);
    hi = std::max(hi, s.q[0]);
  }
  CHECK(lo < -3.0);
  CHECK(hi > 3.0);

  Rng a(17), b(17);
  for (EnvId id : kAll) {
    for (InitMode m : {InitMode::narrow, InitMode::diverse}) {
      const EnvSpec s = make_env_spec(id, m);
      CHECK(reset(s, a) == reset(s, b));
    }
  }

  const EnvSpec hd = make_env_spec(EnvId::hopper1d, InitMode::diverse);
  for (int i = 0; i < 200; ++i) {
    const EnvState s = reset(hd, rng);
    CHECK(s.q[0] >= 0.05);
    CHECK(s.q[0] <= 1.0);
  }
  const EnvState hn = reset(make_env_spec(EnvId::hopper1d), rng);
  CHECK(hn.q == Vec{0.9});
  CHECK(hn.v == Vec{0.0});
}

TEST_CASE("point_mass semi-implicit Euler step") {
  const EnvSpec pm = make_env_spec(EnvId::point_mass);
  const auto r = step(pm, make_state({0.0, 0.0}, {0.0, 0.0}), Vec{1.0, 0.0});
  CHECK(r.next.v[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(r.next.v[1] == 0.0);
  CHECK(r.next.q[0] == doctest::Approx(0.0025).epsilon(1e-15));
  CHECK(r.next.q[1] == 0.0);
  CHECK(r.next.t == 1);
  CHECK(r.reward == doctest::Approx(-((0.0025 - 1.0) * (0.0025 - 1.0) + 1.0) - 0.001));

  // Actions are clipped to the unit box.
  const auto clipped = step(pm, make_state({0.0, 0.0}, {0.0, 0.0}), Vec{5.0, -5.0});
  CHECK(clipped.next.v[0] == doctest::Approx(0.05));
  CHECK(clipped.next.v[1] == doctest::Approx(-0.05));
}

TEST_CASE("pendulum hanging equilibrium and termination predicate") {
  EnvSpec pd = make_env_spec(EnvId::pendulum);
  pd.damping = 0.0;
  EnvState s = make_state({std::numbers::pi}, {0.0});
  for (int i = 0; i < 100; ++i) s = step(pd, s, Vec{0.0}).next;
  CHECK(std::abs(wrap_angle(s.q[0] - std::numbers::pi)) < 1e-9);
  CHECK(std::abs(s.v[0]) < 1e-9);

  EnvSpec with = make_env_spec(EnvId::pendulum, InitMode::narrow, true);
  EnvSpec without = make_env_spec(EnvId::pendulum, InitMode::narrow, false);
  EnvState a = make_state({0.1}, {0.0}), b = a;
  bool terminated_with = false, terminated_without = false;
  for (int i = 0; i < 100; ++i) {
    auto ra = step(with, a, Vec{0.0});
    auto rb = step(without, b, Vec{0.0});
    terminated_with = terminated_with || ra.terminated;
    terminated_without = terminated_without || rb.terminated;
    a = ra.next;
    b = rb.next;
  }
  CHECK(terminated_with);
  CHECK_FALSE(terminated_without);
}

TEST_CASE("terminated states are pseudo-absorbing") {
  const EnvSpec pd = make_env_spec(EnvId::pendulum, InitMode::narrow, true);
  EnvState s = make_state({1.5}, {3.0});
  auto r = step(pd, s, Vec{0.0});
  REQUIRE(r.terminated);
  const EnvState frozen = r.next;
  for (int i = 0; i < 5; ++i) {
    r = step(pd, r.next, Vec{2.0});
    CHECK(r.terminated);
    CHECK(r.reward == 0.0);
    CHECK(r.next.q == frozen.q);
    CHECK(r.next.v == frozen.v);
  }
  CHECK(r.next.t == frozen.t + 5);
}

TEST_CASE("pendulum energy stays bounded under semi-implicit Euler") {
  EnvSpec pd = make_env_spec(EnvId::pendulum);
  pd.damping = 0.0;
  pd.dt = 0.01;
  pd.horizon = 10000;
  EnvState s = make_state({2.0}, {0.0});
  const double e0 = pendulum_energy(s);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    s = step(pd, s, Vec{0.0}).next;
    worst = std::max(worst, std::abs(pendulum_energy(s) - e0) / std::abs(e0));
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("observations") {
  const EnvSpec pd = make_env_spec(EnvId::pendulum);
  CHECK(observe(pd, make_state({0.0}, {0.0})) == Vec{0.0, 1.0, 0.0});

  const EnvSpec pm = make_env_spec(EnvId::point_mass);
  CHECK(observe(pm, make_state({0.2, -0.3}, {0.5, 0.7})) == Vec{0.2, -0.3, 0.5, 0.7, 1.0 - 0.2, 1.0 + 0.3});

  const EnvSpec hp = make_env_spec(EnvId::hopper1d);
  const Vec rest = observe(hp, make_state({0.05}, {0.0}));
  CHECK(rest[2] == 1.0);
  CHECK(observe(hp, make_state({0.9}, {0.0}))[2] == 0.0);

  // Continuity across the +/- pi seam.
  const double eps = 1e-9;
  const Vec a = observe(pd, make_state({std::numbers::pi - eps}, {0.0}));
  const Vec b = observe(pd, make_state({-std::numbers::pi + eps}, {0.0}));
  for (int i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
  const EnvSpec cp = make_env_spec(EnvId::cartpole_swingup);
  const Vec c = observe(cp, make_state({0.0, std::numbers::pi - eps}, {0.0, 0.0}));
  const Vec d = observe(cp, make_state({0.0, -std::numbers::pi + eps}, {0.0, 0.0}));
  for (int i = 0; i < 5; ++i) CHECK(std::abs(c[i] - d[i]) < 1e-8);
}

TEST_CASE("wrap_angle range") {
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3.0 * std::numbers::pi / 2.0) == doctest::Approx(-std::numbers::pi / 2.0));
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double w = wrap_angle(rng.uniform(-50.0, 50.0));
    CHECK(w > -std::numbers::pi);
    CHECK(w <= std::numbers::pi);
  }
}

TEST_CASE("step contract errors") {
  const EnvSpec pm = make_env_spec(EnvId::point_mass);
  const EnvState s = make_state({0.0, 0.0}, {0.0, 0.0});
  CHECK_THROWS_AS(step(pm, s, Vec{1.0}), ContractViolation);
  CHECK_THROWS_AS(step(pm, s, Vec{std::nan(""), 0.0}), ContractViolation);
  CHECK_THROWS_AS(step(pm, s, Vec{std::numeric_limits<double>::infinity(), 0.0}), ContractViolation);
  EnvState done = s;
  done.t = pm.horizon;
  CHECK_THROWS_AS(step(pm, done, Vec{0.0, 0.0}), ContractViolation);
}

TEST_CASE("determinism of transitions") {
  Rng rng(5);
  for (EnvId id : kAll) {
    const EnvSpec spec = make_env_spec(id, InitMode::diverse);
    EnvState s = reset(spec, rng);
    for (int i = 0; i < 50; ++i) {
      Vec a(spec.act_dim);
      for (auto& x : a) x = rng.normal();
      const PerturbationEvent p{Vec(spec.force_dim, 1.5), 0.0, 0.5};
      const auto r1 = step(spec, s, a, p);
      const auto r2 = step(spec, s, a, p);
      CHECK(r1.next == r2.next);
      CHECK(r1.reward == r2.reward);
      s = r1.next;
    }
  }
}

TEST_CASE("perturbation windows") {
  const double dt = 0.01;
  const PerturbationEvent half{Vec{1.0}, 0.0, 0.5};
  int active = 0;
  for (int t = 0; t < 200; ++t) active += half.active_at(t, dt);
  CHECK(active == 50);
  CHECK(half.active_at(0, dt));
  CHECK(half.active_at(49, dt));
  CHECK_FALSE(half.active_at(50, dt));

  const PerturbationEvent later{Vec{1.0}, 0.3, 0.05};
  CHECK_FALSE(later.active_at(29, dt));
  CHECK(later.active_at(30, dt));
  CHECK(later.active_at(34, dt));
  CHECK_FALSE(later.active_at(35, dt));

  Rng rng(2);
  for (EnvId id : kAll) {
    const EnvSpec spec = make_env_spec(id, InitMode::diverse);
    EnvState s = reset(spec, rng);
    for (int i = 0; i < 30; ++i) {
      Vec a(spec.act_dim);
      for (auto& x : a) x = rng.normal();
      const auto plain = step(spec, s, a);
      const PerturbationEvent zero_duration{Vec(spec.force_dim, 3.0), 0.0, 0.0};
      const PerturbationEvent zero_force{Vec(spec.force_dim, 0.0), 0.0, 10.0};
      CHECK(step(spec, s, a, zero_duration).next == plain.next);
      CHECK(step(spec, s, a, zero_force).next == plain.next);
      s = plain.next;
    }
  }

  // Overlapping events sum.
  const EnvSpec pm = make_env_spec(EnvId::point_mass);
  const EnvState s = make_state({0.0, 0.0}, {0.0, 0.0});
  const std::vector<PerturbationEvent> both{{Vec{1.0, 0.0}, 0.0, 1.0}, {Vec{0.5, 2.0}, 0.0, 1.0}};
  const PerturbationEvent sum{Vec{1.5, 2.0}, 0.0, 1.0};
  CHECK(step(pm, s, Vec{0.0, 0.0}, both).next == step(pm, s, Vec{0.0, 0.0}, sum).next);
  CHECK_THROWS_AS(step(pm, s, Vec{0.0, 0.0}, PerturbationEvent{Vec{1.0}, 0.0, 1.0}), ContractViolation);
}

TEST_CASE("termination disabled never terminates under fuzzed actions") {
  Rng rng(77);
  for (EnvId id : kAll) {
    const EnvSpec spec = make_env_spec(id, InitMode::diverse, false);
    for (int ep = 0; ep < 20; ++ep) {
      EnvState s = reset(spec, rng);
      for (int t = 0; t < spec.horizon; ++t) {
        Vec a(spec.act_dim);
        for (auto& x : a) x = 20.0 * rng.normal();
        const auto r = step(spec, s, a);
        REQUIRE_FALSE(r.terminated);
        s = r.next;
      }
    }
  }
}

TEST_CASE("hopper crash predicate needs 50 consecutive low steps") {
  const EnvSpec hp = make_env_spec(EnvId::hopper1d, InitMode::narrow, true);
  const PerturbationEvent pin{Vec{-30.0}, 0.0, 10.0};
  EnvState s = make_state({0.05}, {0.0});
  int steps = 0;
  bool terminated = false;
  while (!terminated && steps < 100) {
    const auto r = step(hp, s, Vec{-0.25}, pin);
    REQUIRE(r.next.q[0] < 0.1);
    terminated = r.terminated;
    s = r.next;
    ++steps;
  }
  CHECK(steps == 50);
}

TEST_CASE("cartpole track clamp") {
  const EnvSpec cp = make_env_spec(EnvId::cartpole_swingup);
  EnvState s = make_state({2.99, 0.0}, {5.0, 0.0});
  const auto r = step(cp, s, Vec{10.0});
  CHECK(r.next.q[0] == 3.0);
  CHECK(r.next.v[0] == 0.0);
}
