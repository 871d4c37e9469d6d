// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   natgrad_acceptance [work_dir]
//
// Training artifacts go under work_dir (default: <tmp>/natgrad_acceptance).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "natgrad/errors.hpp"
#include "natgrad/harness/config.hpp"
#include "natgrad/harness/experiment.hpp"
#include "natgrad/npg.hpp"
#include "oracles.hpp"

using namespace natgrad;
using namespace natgrad::harness;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Every training record produced by this binary, for the step check.
std::vector<IterationRecord> g_records;
double g_delta = 0.05;

fs::path g_work;

ExperimentResult run(const ExperimentConfig& cfg) {
  const ExperimentResult r = run_experiment(cfg);
  for (const auto& s : r.runs) g_records.insert(g_records.end(), s.records.begin(), s.records.end());
  return r;
}

Policy random_policy(bool rbf, int obs, int act, Rng& rng) {
  Policy p = rbf ? Policy::rbf(obs, act, RbfFeaturizer::sample(obs, 10, rng.uniform(0.3, 3.0), rng))
                 : Policy::linear(obs, act);
  for (auto& w : p.weights().data()) w = rng.normal();
  for (auto& b : p.bias()) b = rng.normal();
  for (auto& s : p.log_std()) s = rng.uniform(-1.5, 0.5);
  return p;
}

// ---------------------------------------------------------------------------

Outcome gradient_fd() {
  Rng rng(101);
  double worst = 0.0;
  for (bool rbf : {false, true}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int obs = 1 + trial % 6, act = 1 + trial % 3;
      Policy p = random_policy(rbf, obs, act, rng);
      Vec s(obs), a(act);
      for (auto& x : s) x = rng.normal();
      for (auto& x : a) x = rng.normal();
      const Vec g = p.grad_log_prob(s, a);
      Vec theta = p.parameters();
      Vec fd(theta.size());
      const double h = 1e-5;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double keep = theta[j];
        theta[j] = keep + h;
        p.set_parameters(theta);
        const double up = p.log_prob(s, a);
        theta[j] = keep - h;
        p.set_parameters(theta);
        const double down = p.log_prob(s, a);
        theta[j] = keep;
        fd[j] = (up - down) / (2.0 * h);
      }
      p.set_parameters(theta);
      worst = std::max(worst, oracle::rel_err(g, fd));
    }
  }
  return {worst <= 1e-4, "max rel err " + fmt("%.3g", worst) + " over 200 cases"};
}

Outcome cg_oracle() {
  Rng rng(202);
  CgSettings cg;
  cg.damping = 0.0;
  cg.residual_tolerance = 1e-14;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 10;
    const Matrix a = oracle::random_spd(n, rng);
    Vec b(n);
    for (auto& x : b) x = rng.normal();
    const CgResult r = cg_solve(oracle::matrix_operator(a), b, cg);
    worst = std::max(worst, oracle::rel_err(r.solution, oracle::gauss_solve(a, b)));
  }
  return {worst <= 1e-8, "max rel err " + fmt("%.3g", worst) + " over 50 systems"};
}

Outcome fvp_oracle() {
  Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const bool rbf = trial % 2;
    const Policy p = random_policy(rbf, 2, 1 + trial % 2, rng);
    std::vector<Trajectory> batch;
    std::vector<Vec> scores;
    for (int n = 0; n < 3; ++n) {
      Trajectory t;
      const int len = 2 + n;
      t.horizon = len;
      for (int i = 0; i < len; ++i) {
        Vec s(2), a(p.act_dim());
        for (auto& x : s) x = rng.normal();
        for (auto& x : a) x = rng.normal();
        t.observations.push_back(s);
        t.actions.push_back(a);
        t.rewards.push_back(0.0);
        t.log_probs.push_back(p.log_prob(s, a));
        scores.push_back(p.grad_log_prob(s, a));
      }
      t.observations.push_back(Vec(2, 0.0));
      batch.push_back(t);
    }
    const Matrix f = oracle::assemble_fisher(scores);
    const std::size_t np = p.param_count();
    for (int k = 0; k < 5; ++k) {
      Vec v(np), want(np, 0.0);
      for (auto& x : v) x = rng.normal();
      for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < np; ++j) want[i] += f(i, j) * v[j];
      worst = std::max(worst, oracle::rel_err(fisher_vector_product(p, batch, v, 0.0), want));
    }
  }
  return {worst <= 1e-12, "max rel err " + fmt("%.3g", worst) + " over 100 products"};
}

Outcome step_conformance() {
  std::ostringstream detail;
  bool ok = true;

  int outside = 0;
  for (const auto& r : g_records) {
    if (r.degenerate_step || r.step_quadratic_form < 0.95 * g_delta || r.step_quadratic_form > 1.05 * g_delta) {
      ++outside;
    }
  }
  ok = ok && outside == 0 && !g_records.empty();
  detail << outside << "/" << g_records.size() << " iterations outside [0.95d, 1.05d]";

  // Scaling every advantage scales g but leaves the step unchanged.
  Rng rng(404);
  const EnvSpec env = make_env_spec(EnvId::pendulum);
  Policy p = Policy::rbf(3, 1, RbfFeaturizer::sample(3, 20, 1.0, rng));
  for (auto& w : p.weights().data()) w = 0.5 * rng.normal();
  const auto batch = kernels::collect_rollouts(p, env, 5, Rng(405), ActionMode::stochastic);
  const auto scores = kernels::compute_scores(p, batch);
  std::vector<Vec> adv, adv_scaled;
  for (const auto& t : batch) {
    Vec a(t.length());
    for (auto& x : a) x = rng.normal();
    adv.push_back(a);
    for (auto& x : a) x *= 37.0;
    adv_scaled.push_back(a);
  }
  const LinearOperator fisher = [&](std::span<const double> in, std::span<double> out) {
    kernels::fisher_vector_product(scores, in, 0.0, out);
  };
  const CgSettings cg;
  const NaturalStep s1 = natural_step(policy_gradient(scores, adv), fisher, 0.05, cg);
  const NaturalStep s2 = natural_step(policy_gradient(scores, adv_scaled), fisher, 0.05, cg);
  const double inv = oracle::rel_err(s2.delta_theta, s1.delta_theta);
  ok = ok && inv <= 1e-10;
  detail << "; scale invariance " << fmt("%.3g", inv);

  CgSettings plain;
  plain.damping = 0.0;
  const LinearOperator identity = [](std::span<const double> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), out.begin());
  };
  const Vec g{0.3, -1.2, 0.7, 2.0};
  const double len = norm(natural_step(g, identity, 0.05, plain).delta_theta);
  ok = ok && std::abs(len - std::sqrt(0.05)) <= 1e-12;
  detail << "; identity-metric step " << fmt("%.6f", len);
  return {ok, detail.str()};
}

Outcome gae_oracle() {
  Rng rng(505);
  double worst = 0.0;
  bool endpoints = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 1 + trial % 50;
    Trajectory t;
    t.horizon = 50;
    for (int i = 0; i <= len; ++i) t.observations.push_back({rng.normal(), rng.normal()});
    for (int i = 0; i < len; ++i) {
      t.actions.push_back({0.0});
      t.rewards.push_back(rng.normal());
      t.log_probs.push_back(0.0);
    }
    BaselineModel m = BaselineModel::zero(2);
    for (auto& w : m.weights) w = rng.normal();
    m.fitted_on_iteration = 0;
    Vec v;
    for (int i = 0; i <= len; ++i) v.push_back(predict_value(m, t.observations[i], i, t.horizon));
    const double gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.0, 1.0);

    const Vec got = gae_advantages(t, m, gamma, lambda);
    const Vec want = oracle::gae_brute_force(t.rewards, v, gamma, lambda);
    for (int i = 0; i < len; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));

    const Vec td = gae_advantages(t, m, gamma, 0.0);
    for (int i = 0; i < len; ++i) endpoints = endpoints && td[i] == t.rewards[i] + gamma * v[i + 1] - v[i];
    const Vec mc = gae_advantages(t, m, gamma, 1.0);
    for (int i = 0; i < len; ++i) {
      double ret = 0.0, w = 1.0;
      for (int l = i; l < len; ++l, w *= gamma) ret += w * t.rewards[l];
      const double closed = ret + w * v[len] - v[i];
      endpoints = endpoints && std::abs(mc[i] - closed) <= 1e-10;
    }
  }
  return {worst <= 1e-10 && endpoints,
          "max abs err " + fmt("%.3g", worst) + (endpoints ? ", endpoints hold" : ", endpoint mismatch")};
}

// Point-mass reference: best a = kp (g - p) - kd v over a 0.1 grid on [0, 10]^2.
double pd_return(const EnvSpec& env, double kp, double kd, int episodes, const Rng& stream) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = stream.split(static_cast<std::uint64_t>(e));
    EnvState s = reset(env, rng);
    for (int t = 0; t < env.horizon; ++t) {
      const Vec a{kp * (1.0 - s.q[0]) - kd * s.v[0], kp * (1.0 - s.q[1]) - kd * s.v[1]};
      const StepResult r = step(env, s, a);
      total += r.reward;
      s = r.next;
    }
  }
  return total / episodes;
}

ExperimentConfig learning_config(const fs::path& out) {
  ExperimentConfig c;
  c.name = "pm_linear";
  c.env = EnvId::point_mass;
  c.policy = Architecture::linear;
  c.train.delta = 0.05;
  c.train.trajectories_per_iter = 20;
  c.train.iterations = 100;
  c.seeds = {0, 1, 2};
  c.output_dir = out.string();
  c.checkpoint_every = 0;
  c.record_wallclock = false;
  return c;
}

const Rng kEvalStream(0xacce55);
ExperimentResult g_learning;

Outcome learning() {
  const auto t0 = std::chrono::steady_clock::now();
  g_learning = run(learning_config(g_work / "a"));
  const EnvSpec env = make_env_spec(EnvId::point_mass);
  std::vector<double> finals;
  for (const auto& s : g_learning.runs) {
    finals.push_back(evaluate(s.final_policy, env, 100, ActionMode::mean, kEvalStream).mean_return);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const Rng search(0x5ea7c4);
  double best = -1e300, best_kp = 0.0, best_kd = 0.0;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double r = pd_return(env, 0.1 * i, 0.1 * j, 20, search);
      if (r > best) best = r, best_kp = 0.1 * i, best_kd = 0.1 * j;
    }
  }
  const double ref = pd_return(env, best_kp, best_kd, 100, kEvalStream);
  // 95% of a negative return read as within 5% of |ref| below it.
  const double bar = ref - 0.05 * std::abs(ref);
  const double mean = mean_of(finals);
  const double zero = pd_return(env, 0.0, 0.0, 100, kEvalStream);
  std::ostringstream d;
  d << "final mean-mode return " << fmt("%.2f", mean) << " (seeds";
  for (double f : finals) d << " " << fmt("%.2f", f);
  d << ") vs bar " << fmt("%.2f", bar) << " from reference " << fmt("%.2f", ref) << " at kp " << best_kp << " kd "
    << best_kd << "; zero policy " << fmt("%.2f", zero) << ", improvement ratio "
    << fmt("%.3f", (mean - zero) / (ref - zero)) << "; training " << fmt("%.1f", secs) << " s";
  return {mean >= bar, d.str()};
}

ExperimentConfig pendulum_config(const fs::path& out, InitMode mode, const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.env = EnvId::pendulum;
  c.init_mode = mode;
  c.policy = Architecture::rbf;
  c.num_features = 100;
  c.train.trajectories_per_iter = 40;
  c.train.iterations = 500;
  c.seeds = {0, 1, 2};
  c.output_dir = out.string();
  c.checkpoint_every = 100;
  c.record_wallclock = false;
  return c;
}

ExperimentResult g_diverse;

Outcome swing_up() {
  const auto t0 = std::chrono::steady_clock::now();
  g_diverse = run(pendulum_config(g_work, InitMode::diverse, "pendulum_diverse"));
  const EnvSpec env = make_env_spec(EnvId::pendulum, InitMode::diverse);
  int good_seeds = 0;
  std::ostringstream d;
  d << "upright episodes per seed:";
  for (const auto& s : g_diverse.runs) {
    const auto trajs = kernels::collect_rollouts(s.final_policy, env, 100, kEvalStream, ActionMode::mean);
    int upright = 0;
    for (const auto& t : trajs) upright += progress_metric(EnvId::pendulum, t) >= 0.5;
    good_seeds += upright >= 80;
    d << " " << upright << "/100";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  d << "; " << good_seeds << "/3 seeds at >= 80; training " << fmt("%.1f", secs) << " s";
  return {good_seeds >= 2, d.str()};
}

Outcome feature_ordering() {
  ExperimentConfig base;
  base.name = "cartpole_study";
  base.env = EnvId::cartpole_swingup;
  base.init_mode = InitMode::diverse;
  base.train.trajectories_per_iter = 40;
  base.train.iterations = 150;
  base.seeds = {0, 1, 2, 3, 4};
  base.output_dir = g_work.string();
  base.checkpoint_every = 0;
  base.record_wallclock = false;
  const std::vector<int> counts{25, 100};
  const StudyResult r = feature_count_study(base, counts);

  const StudySummaryRow* lin = nullptr;
  const StudySummaryRow* r25 = nullptr;
  const StudySummaryRow* r100 = nullptr;
  for (const auto& s : r.summary) {
    if (s.architecture == "linear") lin = &s;
    if (s.num_features == 25) r25 = &s;
    if (s.num_features == 100) r100 = &s;
  }
  if (!lin || !r25 || !r100) return {false, "study summary is missing an architecture"};
  // hi >= lo, or a tie: the +/- 1 s.d. intervals overlap.
  auto not_reversed = [](const StudySummaryRow& hi, const StudySummaryRow& lo) {
    return hi.mean_final_stoc >= lo.mean_final_stoc ||
           hi.mean_final_stoc + hi.std_final_stoc >= lo.mean_final_stoc - lo.std_final_stoc;
  };
  const bool ok = not_reversed(*r100, *r25) && not_reversed(*r25, *lin) && not_reversed(*r100, *lin);
  std::ostringstream d;
  for (const auto* s : {r100, r25, lin}) {
    d << s->architecture << " " << fmt("%.1f", s->mean_final_stoc) << " +/- " << fmt("%.1f", s->std_final_stoc)
      << (s == lin ? "" : ", ");
  }
  return {ok, d.str()};
}

Outcome robustness() {
  const ExperimentResult narrow = run(pendulum_config(g_work, InitMode::narrow, "pendulum_narrow"));
  const EnvSpec env = make_env_spec(EnvId::pendulum, InitMode::narrow);
  PerturbSweepSpec sweep;
  sweep.magnitudes = {3.0, 5.0};
  sweep.duration = 0.5;
  sweep.start_time = 0.0;
  sweep.episodes = 20;
  sweep.init_mode = InitMode::narrow;
  sweep.seed = 0xacce55;
  auto recovery = [&](const Policy& p) {
    double s = 0.0;
    const auto rows = perturb_sweep(p, env, sweep);
    for (const auto& r : rows) s += r.progress;
    return s / static_cast<double>(rows.size());
  };
  std::vector<double> div, nar;
  for (const auto& s : g_diverse.runs) div.push_back(recovery(s.final_policy));
  for (const auto& s : narrow.runs) nar.push_back(recovery(s.final_policy));
  const double worst_div = *std::min_element(div.begin(), div.end());
  const double best_nar = *std::max_element(nar.begin(), nar.end());
  std::ostringstream d;
  d << "upright fraction after push, diverse-trained";
  for (double x : div) d << " " << fmt("%.3f", x);
  d << " vs narrow-trained";
  for (double x : nar) d << " " << fmt("%.3f", x);
  return {worst_div > best_nar, d.str()};
}

ExperimentConfig threshold_rbf_config(const fs::path& out) {
  ExperimentConfig c = learning_config(out);
  c.name = "pm_rbf";
  c.policy = Architecture::rbf;
  c.num_features = 100;
  return c;
}

Outcome threshold_determinism() {
  run(threshold_rbf_config(g_work / "a"));
  run(learning_config(g_work / "b"));
  run(threshold_rbf_config(g_work / "b"));
  const auto a = episodes_to_threshold(load_threshold_curves(g_work / "a"), 0.9);
  const auto b = episodes_to_threshold(load_threshold_curves(g_work / "b"), 0.9);
  const std::string ca = format_threshold_csv(a), cb = format_threshold_csv(b);
  write_text_file(g_work / "a" / "threshold.csv", ca);
  std::ostringstream d;
  for (const auto& r : a) {
    d << r.architecture << " " << (r.episodes ? std::to_string(*r.episodes) : std::string("not reached")) << "; ";
  }
  d << (ca == cb ? "identical across re-runs" : "differs across re-runs");
  return {ca == cb && a.size() == 2, d.str()};
}

Outcome curve_determinism() {
  bool same = true;
  int files = 0;
  for (std::uint64_t seed : {0, 1, 2}) {
    const std::string rel = "pm_linear/seed_" + std::to_string(seed) + "/curve.csv";
    same = same && read_text_file(g_work / "a" / rel) == read_text_file(g_work / "b" / rel);
    ++files;
  }
  return {same, std::to_string(files) + " curve files " + (same ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "natgrad_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  // Order matters: later criteria reuse runs trained by earlier ones; the
  // step check looks at every iteration trained before it.
  const std::vector<Criterion> criteria{
      {"gradient finite differences", gradient_fd},
      {"conjugate gradient oracle", cg_oracle},
      {"fisher-vector product oracle", fvp_oracle},
      {"GAE oracle", gae_oracle},
      {"point_mass learning vs reference controller", learning},
      {"pendulum swing-up", swing_up},
      {"cartpole feature-count ordering", feature_ordering},
      {"pendulum diverse-init robustness", robustness},
      {"episodes-to-threshold determinism", threshold_determinism},
      {"learning-curve determinism", curve_determinism},
      {"normalized step conformance", step_conformance},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << fmt("%.1f", secs) << " s]"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
