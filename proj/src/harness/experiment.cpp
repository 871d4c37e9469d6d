#include "natgrad/harness/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "natgrad/errors.hpp"
#include "natgrad/harness/checkpoint.hpp"

namespace natgrad::harness {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto l = text.substr(pos, end - pos);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) out.push_back(l);
    pos = end + 1;
  }
  return out;
}

double csv_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ContractViolation("csv: bad number '" + std::string(v) + "'");
  return out;
}

long csv_long(std::string_view v) {
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ContractViolation("csv: bad integer '" + std::string(v) + "'");
  return out;
}

std::pair<double, double> mean_and_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

std::string direction_column(EnvId id) {
  switch (id) {
    case EnvId::point_mass: return "direction_accel_xy";
    case EnvId::pendulum: return "direction_torque";
    case EnvId::cartpole_swingup: return "direction_cart_force";
    case EnvId::hopper1d: return "direction_vertical_force";
  }
  return "direction";
}

std::string format_direction(std::span<const double> d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? ";" : "") + format_double(d[i]);
  return s;
}

}  // namespace

void write_text_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_curve_csv(std::span<const IterationRecord> records) {
  std::ostringstream out;
  out << kCurveHeader << "\n";
  for (const auto& r : records) {
    out << r.iteration << "," << r.episodes << "," << format_double(r.mean_return_stoc) << ","
        << format_double(r.mean_return_mean) << "," << format_double(r.sample_kl) << ","
        << format_double(r.step_quadratic_form) << "," << format_double(r.cg_residual) << ","
        << format_double(r.wallclock_s) << "\n";
  }
  return out.str();
}

std::vector<IterationRecord> parse_curve_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kCurveHeader) throw ContractViolation("curve csv: missing header");
  std::vector<IterationRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != 8) throw ContractViolation("curve csv: row " + std::to_string(i) + " has wrong column count");
    IterationRecord r;
    r.iteration = static_cast<int>(csv_long(f[0]));
    r.episodes = csv_long(f[1]);
    r.mean_return_stoc = csv_double(f[2]);
    r.mean_return_mean = csv_double(f[3]);
    r.sample_kl = csv_double(f[4]);
    r.step_quadratic_form = csv_double(f[5]);
    r.cg_residual = csv_double(f[6]);
    r.wallclock_s = csv_double(f[7]);
    out.push_back(r);
  }
  return out;
}

std::vector<AggregateRow> aggregate_curves(std::span<const std::vector<IterationRecord>> per_seed) {
  std::vector<AggregateRow> rows;
  if (per_seed.empty()) return rows;
  std::size_t n = per_seed.front().size();
  for (const auto& c : per_seed) n = std::min(n, c.size());
  for (std::size_t i = 0; i < n; ++i) {
    Vec stoc, mean;
    for (const auto& c : per_seed) {
      stoc.push_back(c[i].mean_return_stoc);
      mean.push_back(c[i].mean_return_mean);
    }
    AggregateRow row;
    row.iteration = per_seed.front()[i].iteration;
    row.episodes = per_seed.front()[i].episodes;
    std::tie(row.stoc_mean, row.stoc_std) = mean_and_std(stoc);
    std::tie(row.mean_mean, row.mean_std) = mean_and_std(mean);
    row.seeds = static_cast<int>(per_seed.size());
    rows.push_back(row);
  }
  return rows;
}

std::string format_aggregate_csv(std::span<const AggregateRow> rows) {
  std::ostringstream out;
  out << "iteration,episodes,mean_return_stoc_mean,mean_return_stoc_std,mean_return_mean_mean,mean_return_mean_std,"
         "seeds\n";
  for (const auto& r : rows) {
    out << r.iteration << "," << r.episodes << "," << format_double(r.stoc_mean) << "," << format_double(r.stoc_std)
        << "," << format_double(r.mean_mean) << "," << format_double(r.mean_std) << "," << r.seeds << "\n";
  }
  return out.str();
}

std::vector<AggregateRow> parse_aggregate_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || !lines.front().starts_with("iteration,episodes,mean_return_stoc_mean")) {
    throw ContractViolation("aggregate csv: missing header");
  }
  std::vector<AggregateRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != 7) throw ContractViolation("aggregate csv: row " + std::to_string(i) + " has wrong column count");
    AggregateRow r;
    r.iteration = static_cast<int>(csv_long(f[0]));
    r.episodes = csv_long(f[1]);
    r.stoc_mean = csv_double(f[2]);
    r.stoc_std = csv_double(f[3]);
    r.mean_mean = csv_double(f[4]);
    r.mean_std = csv_double(f[5]);
    r.seeds = static_cast<int>(csv_long(f[6]));
    out.push_back(r);
  }
  return out;
}

std::string format_trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  const std::size_t obs_dim = traj.observations.empty() ? 0 : traj.observations.front().size();
  const std::size_t act_dim = traj.actions.empty() ? 0 : traj.actions.front().size();
  out << "t";
  for (std::size_t i = 0; i < obs_dim; ++i) out << ",obs" << i;
  for (std::size_t i = 0; i < act_dim; ++i) out << ",act" << i;
  out << ",reward,logprob\n";
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    out << t;
    for (double v : traj.observations[t]) out << "," << format_double(v);
    for (double v : traj.actions[t]) out << "," << format_double(v);
    out << "," << format_double(traj.rewards[t]) << "," << format_double(traj.log_probs[t]) << "\n";
  }
  return out.str();
}

Policy make_initial_policy(const ExperimentConfig& config, std::uint64_t seed) {
  const EnvSpec env = config.env_spec();
  Policy linear = Policy::linear(env.obs_dim, env.act_dim);
  if (config.policy == Architecture::linear) return linear;

  const Rng root(seed);
  const auto probes = kernels::collect_rollouts(linear, env, 10, root.split(0xbadULL), ActionMode::stochastic);
  std::vector<Vec> observations;
  for (const auto& t : probes) observations.insert(observations.end(), t.observations.begin(), t.observations.end());
  const double bandwidth = bandwidth_heuristic(observations, config.bandwidth_floor);
  Rng feature_rng = root.split(0xfea7ULL);
  return Policy::rbf(env.obs_dim, env.act_dim,
                     RbfFeaturizer::sample(env.obs_dim, config.num_features, bandwidth, feature_rng));
}

fs::path experiment_dir(const ExperimentConfig& config) { return fs::path(config.output_dir) / config.name; }

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  ExperimentResult result;
  result.dir = experiment_dir(config);
  std::error_code ec;
  fs::create_directories(result.dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + result.dir.string() + "': " + ec.message());
  write_text_file(result.dir / "config.txt", serialize_config(config));

  const EnvSpec env = config.env_spec();
  for (const std::uint64_t seed : config.seeds) {
    const fs::path seed_dir = result.dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir, ec);
    if (ec) throw ConfigError("cannot create '" + seed_dir.string() + "': " + ec.message());

    auto sink = [&](const IterationRecord& rec, const Policy& policy) {
      if (config.checkpoint_every > 0 && rec.iteration % config.checkpoint_every == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "policy_iter_%04d.txt", rec.iteration);
        save_checkpoint(policy, (seed_dir / name).string());
      }
      if (log) {
        *log << config.name << " seed " << seed << " iter " << rec.iteration << " stoc " << rec.mean_return_stoc
             << " mean " << rec.mean_return_mean << " kl " << rec.sample_kl << "\n";
      }
    };
    TrainResult tr =
        train(config.train_config(seed), env, make_initial_policy(config, seed), sink, config.record_wallclock);
    write_text_file(seed_dir / "curve.csv", format_curve_csv(tr.records));
    save_checkpoint(tr.policy, (seed_dir / "policy_final.txt").string());
    result.runs.push_back({seed, std::move(tr.records), std::move(tr.policy)});
  }

  std::vector<std::vector<IterationRecord>> curves;
  for (const auto& r : result.runs) curves.push_back(r.records);
  result.aggregate = aggregate_curves(curves);
  write_text_file(result.dir / "aggregate.csv", format_aggregate_csv(result.aggregate));
  return result;
}

double threshold_from_final(double final_score, double fraction) {
  return final_score - (1.0 - fraction) * std::abs(final_score);
}

std::vector<ThresholdRow> episodes_to_threshold(std::span<const ThresholdCurve> curves, double fraction) {
  std::vector<ThresholdRow> out;
  std::vector<EnvId> envs;
  for (const auto& c : curves)
    if (std::find(envs.begin(), envs.end(), c.env) == envs.end()) envs.push_back(c.env);

  for (EnvId env : envs) {
    const ThresholdCurve* reference = nullptr;
    for (const auto& c : curves) {
      if (c.env == env && c.architecture == "linear" && !c.rows.empty()) {
        reference = &c;
        break;
      }
    }
    if (!reference) {
      throw ContractViolation("episodes_to_threshold: no linear reference run for " + std::string(to_string(env)));
    }
    const double threshold = threshold_from_final(reference->rows.back().stoc_mean, fraction);
    for (const auto& c : curves) {
      if (c.env != env) continue;
      ThresholdRow row{env, c.experiment, c.architecture, threshold, std::nullopt};
      for (const auto& r : c.rows) {
        if (r.stoc_mean >= threshold) {
          row.episodes = r.episodes;
          break;
        }
      }
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<ThresholdCurve> load_threshold_curves(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "config.txt") &&
        fs::exists(entry.path() / "aggregate.csv")) {
      candidates.push_back(entry.path());
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<ThresholdCurve> curves;
  for (const auto& p : candidates) {
    const ExperimentConfig cfg = parse_config(read_text_file(p / "config.txt"));
    curves.push_back({p.filename().string(), cfg.env, cfg.architecture_label(),
                      parse_aggregate_csv(read_text_file(p / "aggregate.csv"))});
  }
  return curves;
}

std::string format_threshold_csv(std::span<const ThresholdRow> rows) {
  std::ostringstream out;
  out << "env,experiment,architecture,threshold,episodes\n";
  for (const auto& r : rows) {
    out << to_string(r.env) << "," << r.experiment << "," << r.architecture << "," << format_double(r.threshold)
        << "," << (r.episodes ? std::to_string(*r.episodes) : std::string("not reached")) << "\n";
  }
  return out.str();
}

std::string progress_metric_name(EnvId id) {
  switch (id) {
    case EnvId::point_mass: return "final_goal_distance";
    case EnvId::pendulum:
    case EnvId::cartpole_swingup: return "upright_fraction";
    case EnvId::hopper1d: return "high_fraction";
  }
  return "progress";
}

double progress_metric(EnvId id, const Trajectory& traj) {
  const auto& obs = traj.observations;
  if (id == EnvId::point_mass) {
    const Vec& last = obs.back();
    return std::hypot(last[4], last[5]);
  }
  int hits = 0;
  const int steps = static_cast<int>(obs.size()) - 1;
  for (int t = 1; t <= steps; ++t) {
    const Vec& o = obs[static_cast<std::size_t>(t)];
    bool hit = false;
    switch (id) {
      case EnvId::pendulum: hit = std::abs(std::atan2(o[0], o[1])) < 0.25; break;
      case EnvId::cartpole_swingup: hit = std::abs(std::atan2(o[1], o[2])) < 0.25; break;
      case EnvId::hopper1d: hit = o[0] > 0.6; break;
      case EnvId::point_mass: break;
    }
    hits += hit ? 1 : 0;
  }
  return steps > 0 ? static_cast<double>(hits) / steps : 0.0;
}

std::vector<Vec> sweep_directions(const PerturbSweepSpec& sweep, const EnvSpec& env) {
  if (!sweep.directions.empty()) {
    for (const auto& d : sweep.directions) {
      if (d.size() != static_cast<std::size_t>(env.force_dim)) {
        throw ContractViolation("sweep direction has " + std::to_string(d.size()) + " components but " +
                                std::string(to_string(env.id)) + " forces have " + std::to_string(env.force_dim));
      }
    }
    return sweep.directions;
  }
  std::vector<Vec> dirs;
  for (int axis = 0; axis < env.force_dim; ++axis) {
    for (double sign : {1.0, -1.0}) {
      Vec d(static_cast<std::size_t>(env.force_dim), 0.0);
      d[static_cast<std::size_t>(axis)] = sign;
      dirs.push_back(d);
    }
  }
  return dirs;
}

std::vector<SweepRow> perturb_sweep(const Policy& policy, const EnvSpec& env_in, const PerturbSweepSpec& sweep) {
  EnvSpec env = env_in;
  env.init_mode = sweep.init_mode;
  env.validate();
  if (policy.obs_dim() != env.obs_dim || policy.act_dim() != env.act_dim) {
    throw ContractViolation("perturb_sweep: checkpoint has obs " + std::to_string(policy.obs_dim()) + " act " +
                            std::to_string(policy.act_dim()) + " but " + std::string(to_string(env.id)) +
                            " needs obs " + std::to_string(env.obs_dim) + " act " + std::to_string(env.act_dim));
  }
  const Rng rng(sweep.seed);
  std::vector<SweepRow> rows;
  for (double magnitude : sweep.magnitudes) {
    for (const Vec& dir : sweep_directions(sweep, env)) {
      PerturbationEvent ev{Vec(dir.size()), sweep.start_time, sweep.duration};
      for (std::size_t i = 0; i < dir.size(); ++i) ev.force[i] = magnitude * dir[i];
      const auto trajs = kernels::collect_rollouts(policy, env, sweep.episodes, rng, ActionMode::mean,
                                                   std::span<const PerturbationEvent>(&ev, 1));
      SweepRow row{magnitude, dir, sweep.episodes, 0.0, 0.0};
      for (const auto& t : trajs) {
        row.mean_return += t.total_reward();
        row.progress += progress_metric(env.id, t);
      }
      row.mean_return /= sweep.episodes;
      row.progress /= sweep.episodes;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_sweep_csv(EnvId id, std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "magnitude," << direction_column(id) << ",episodes,mean_return," << progress_metric_name(id) << "\n";
  for (const auto& r : rows) {
    out << format_double(r.magnitude) << "," << format_direction(r.direction) << "," << r.episodes << ","
        << format_double(r.mean_return) << "," << format_double(r.progress) << "\n";
  }
  return out.str();
}

StudyResult feature_count_study(const ExperimentConfig& base, std::span<const int> counts, std::ostream* log) {
  if (counts.empty()) throw ContractViolation("feature_count_study: no feature counts given");
  for (int c : counts)
    if (c <= 0) throw ContractViolation("feature_count_study: feature counts must be positive");

  StudyResult study;
  study.dir = experiment_dir(base);

  std::vector<ExperimentConfig> arms;
  ExperimentConfig linear = base;
  linear.policy = Architecture::linear;
  arms.push_back(linear);
  for (int c : counts) {
    ExperimentConfig rbf = base;
    rbf.policy = Architecture::rbf;
    rbf.num_features = c;
    arms.push_back(rbf);
  }

  const EnvSpec env = base.env_spec();
  for (auto& arm : arms) {
    arm.output_dir = study.dir.string();
    arm.name = arm.architecture_label();
    const ExperimentResult res = run_experiment(arm, log);
    const int features = arm.policy == Architecture::linear ? 0 : arm.num_features;
    const int params = env.act_dim * (arm.policy == Architecture::linear ? env.obs_dim : arm.num_features) +
                       2 * env.act_dim;
    Vec stoc, mean;
    for (const auto& run : res.runs) {
      const auto& last = run.records.back();
      study.rows.push_back(
          {arm.name, features, params, run.seed, last.mean_return_stoc, last.mean_return_mean});
      stoc.push_back(last.mean_return_stoc);
      mean.push_back(last.mean_return_mean);
    }
    StudySummaryRow s{arm.name, features, params, 0, 0, 0, 0};
    std::tie(s.mean_final_stoc, s.std_final_stoc) = mean_and_std(stoc);
    std::tie(s.mean_final_mean, s.std_final_mean) = mean_and_std(mean);
    study.summary.push_back(s);
  }

  std::ostringstream rows;
  rows << "architecture,num_features,param_count,seed,final_return_stoc,final_return_mean\n";
  for (const auto& r : study.rows) {
    rows << r.architecture << "," << r.num_features << "," << r.param_count << "," << r.seed << ","
         << format_double(r.final_return_stoc) << "," << format_double(r.final_return_mean) << "\n";
  }
  write_text_file(study.dir / "study.csv", rows.str());

  std::ostringstream summary;
  summary << "architecture,num_features,param_count,mean_final_return_stoc,std_final_return_stoc,"
             "mean_final_return_mean,std_final_return_mean\n";
  for (const auto& s : study.summary) {
    summary << s.architecture << "," << s.num_features << "," << s.param_count << ","
            << format_double(s.mean_final_stoc) << "," << format_double(s.std_final_stoc) << ","
            << format_double(s.mean_final_mean) << "," << format_double(s.std_final_mean) << "\n";
  }
  write_text_file(study.dir / "study_summary.csv", summary.str());
  return study;
}

}  // namespace natgrad::harness
