#include <doctest.h>

#include <omp.h>

#include "natgrad/errors.hpp"
#include "natgrad/kernels.hpp"
#include "oracles.hpp"

using namespace natgrad;

namespace {

Policy test_policy(bool rbf, EnvId env, Rng& rng) {
  const EnvSpec spec = make_env_spec(env);
  Policy p = rbf ? Policy::rbf(spec.obs_dim, spec.act_dim, RbfFeaturizer::sample(spec.obs_dim, 30, 2.0, rng))
                 : Policy::linear(spec.obs_dim, spec.act_dim);
  for (auto& w : p.weights().data()) w = 0.3 * rng.normal();
  for (auto& s : p.log_std()) s = rng.uniform(-1.0, 0.0);
  return p;
}

struct ThreadCount {
  int saved = omp_get_max_threads();
  explicit ThreadCount(int n) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("rollout shapes and determinism") {
  Rng rng(1);
  const Policy p = test_policy(false, EnvId::point_mass, rng);
  const EnvSpec spec = make_env_spec(EnvId::point_mass);
  const Trajectory a = rollout(p, spec, Rng(5), ActionMode::stochastic);
  const Trajectory b = rollout(p, spec, Rng(5), ActionMode::stochastic);
  CHECK(a.length() == spec.horizon);
  CHECK(a.observations.size() == static_cast<std::size_t>(spec.horizon) + 1);
  CHECK(a.rewards == b.rewards);
  CHECK(a.actions == b.actions);
  a.validate();
  for (int t = 0; t < a.length(); ++t) CHECK(a.log_probs[t] == p.log_prob(a.observations[t], a.actions[t]));

  const Trajectory m = rollout(p, spec, Rng(5), ActionMode::mean);
  for (int t = 0; t < m.length(); ++t) CHECK(m.actions[t] == p.mean_action(m.observations[t]));
}

TEST_CASE("rollout records the first termination") {
  const EnvSpec spec = make_env_spec(EnvId::pendulum, InitMode::narrow, true);
  Policy push = Policy::linear(3, 1);
  push.bias() = {2.5};
  const Trajectory t = rollout(push, spec, Rng(3), ActionMode::mean);
  REQUIRE(t.terminated_at.has_value());
  t.validate();
  for (int i = *t.terminated_at + 1; i < t.length(); ++i) CHECK(t.rewards[i] == 0.0);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  const ThreadCount threads(4);
  Rng rng(2);
  for (bool rbf : {false, true}) {
    for (EnvId env : {EnvId::point_mass, EnvId::pendulum, EnvId::cartpole_swingup, EnvId::hopper1d}) {
      const Policy p = test_policy(rbf, env, rng);
      const EnvSpec spec = make_env_spec(env, InitMode::diverse);
      const Rng stream(11);
      const auto par = kernels::collect_rollouts(p, spec, 7, stream, ActionMode::stochastic);
      const auto ser = kernels::collect_rollouts_serial(p, spec, 7, stream, ActionMode::stochastic);
      REQUIRE(par.size() == ser.size());
      for (std::size_t n = 0; n < par.size(); ++n) {
        CHECK(par[n].observations == ser[n].observations);
        CHECK(par[n].actions == ser[n].actions);
        CHECK(par[n].rewards == ser[n].rewards);
        CHECK(par[n].log_probs == ser[n].log_probs);
      }

      const auto sp = kernels::compute_scores(p, par);
      const auto ss = kernels::compute_scores_serial(p, ser);
      CHECK(sp.by_param == ss.by_param);
      CHECK(sp.traj_of == ss.traj_of);
      CHECK(sp.traj_len == ss.traj_len);

      Vec v(sp.params());
      for (auto& x : v) x = rng.normal();
      Vec fp(sp.params()), fs(sp.params());
      kernels::fisher_vector_product(sp, v, 1e-4, fp);
      kernels::fisher_vector_product_serial(ss, v, 1e-4, fs);
      CHECK(fp == fs);

      Vec w(sp.samples());
      for (auto& x : w) x = rng.normal();
      Vec wp(sp.params()), ws(sp.params());
      kernels::weighted_score_sum(sp, w, wp);
      kernels::weighted_score_sum_serial(ss, w, ws);
      CHECK(wp == ws);
    }
  }

  std::vector<Vec> pts(3000, Vec(4));
  for (auto& p : pts)
    for (auto& x : p) x = rng.normal();
  CHECK(kernels::mean_pairwise_distance(pts) == kernels::mean_pairwise_distance_serial(pts));
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(3);
  const Policy p = test_policy(true, EnvId::cartpole_swingup, rng);
  const EnvSpec spec = make_env_spec(EnvId::cartpole_swingup, InitMode::diverse);
  std::vector<Vec> outs;
  for (int n : {1, 2, 3, 8}) {
    const ThreadCount threads(n);
    const auto batch = kernels::collect_rollouts(p, spec, 5, Rng(4), ActionMode::stochastic);
    const auto sc = kernels::compute_scores(p, batch);
    Vec v(sc.params(), 0.5), out(sc.params());
    kernels::fisher_vector_product(sc, v, 1e-4, out);
    outs.push_back(out);
  }
  for (const auto& o : outs) CHECK(o == outs.front());
}

TEST_CASE("fisher product matches an explicitly assembled matrix") {
  Rng rng(5);
  Policy tiny = Policy::linear(1, 1);
  tiny.weights()(0, 0) = 0.3;
  std::vector<Trajectory> batch(1);
  batch[0].horizon = 10;
  for (int i = 0; i < 10; ++i) {
    batch[0].observations.push_back({rng.normal()});
    batch[0].actions.push_back({rng.normal()});
    batch[0].rewards.push_back(0.0);
    batch[0].log_probs.push_back(0.0);
  }
  batch[0].observations.push_back({0.0});
  const auto scores = kernels::compute_scores_serial(tiny, batch);
  std::vector<Vec> per_sample;
  for (int i = 0; i < 10; ++i) per_sample.push_back(tiny.grad_log_prob(batch[0].observations[i], batch[0].actions[i]));
  const Matrix f = oracle::assemble_fisher(per_sample);
  for (int trial = 0; trial < 20; ++trial) {
    Vec v(3);
    for (auto& x : v) x = rng.normal();
    Vec want(3, 0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) want[i] += f(i, j) * v[j];
    Vec got(3);
    kernels::fisher_vector_product(scores, v, 0.0, got);
    CHECK(oracle::rel_err(got, want) <= 1e-12);
  }

  Vec bad(2), out(3);
  CHECK_THROWS_AS(kernels::fisher_vector_product(scores, bad, 0.0, out), ContractViolation);
}

TEST_CASE("pairwise distance") {
  const std::vector<Vec> line{{0.0}, {1.0}, {2.0}};
  CHECK(kernels::mean_pairwise_distance(line) == doctest::Approx(4.0 / 3.0));
  CHECK(kernels::mean_pairwise_distance(std::vector<Vec>{{1.0}}) == 0.0);
}
