#include "natgrad/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "natgrad/errors.hpp"

namespace natgrad::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                    std::string(expected));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

long long to_int(std::string_view key, std::string_view v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

template <typename T>
T parse_enum(std::string_view key, std::string_view v, T (*fn)(std::string_view)) {
  try {
    return fn(v);
  } catch (const ContractViolation& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what());
  }
}

Architecture parse_architecture(std::string_view v) {
  if (v == "linear") return Architecture::linear;
  if (v == "rbf") return Architecture::rbf;
  throw ContractViolation("unknown policy '" + std::string(v) + "' (expected linear or rbf)");
}

using Entries = std::vector<std::pair<std::string, std::string>>;

Entries read_entries(std::string_view text) {
  Entries entries;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

EnvSpec ExperimentConfig::env_spec() const {
  EnvSpec spec = make_env_spec(env, init_mode, termination);
  if (horizon > 0) spec.horizon = horizon;
  return spec;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  TrainConfig tc = train;
  tc.seed = seed;
  if (tc.trajectories_per_iter <= 0) tc.trajectories_per_iter = default_trajectories_per_iter(env);
  return tc;
}

std::string ExperimentConfig::architecture_label() const {
  return policy == Architecture::linear ? "linear" : "rbf-" + std::to_string(num_features);
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return serialize_config(*this) == serialize_config(o);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  c.train.trajectories_per_iter = 0;
  bool have_name = false;
  bool have_env = false;

  const std::map<std::string, std::function<void(std::string_view, std::string_view)>> setters = {
      {"name", [&](auto, auto v) { c.name = std::string(v); have_name = !v.empty(); }},
      {"env", [&](auto k, auto v) { c.env = parse_enum(k, v, parse_env_id); have_env = true; }},
      {"init_mode", [&](auto k, auto v) { c.init_mode = parse_enum(k, v, parse_init_mode); }},
      {"termination", [&](auto k, auto v) { c.termination = to_bool(k, v); }},
      {"horizon", [&](auto k, auto v) { c.horizon = static_cast<int>(to_int(k, v)); }},
      {"policy", [&](auto k, auto v) { c.policy = parse_enum(k, v, parse_architecture); }},
      {"num_features", [&](auto k, auto v) { c.num_features = static_cast<int>(to_int(k, v)); }},
      {"bandwidth_floor", [&](auto k, auto v) { c.bandwidth_floor = to_double(k, v); }},
      {"delta", [&](auto k, auto v) { c.train.delta = to_double(k, v); }},
      {"gamma", [&](auto k, auto v) { c.train.gamma = to_double(k, v); }},
      {"lambda", [&](auto k, auto v) { c.train.lambda = to_double(k, v); }},
      {"trajectories_per_iter", [&](auto k, auto v) { c.train.trajectories_per_iter = static_cast<int>(to_int(k, v)); }},
      {"iterations", [&](auto k, auto v) { c.train.iterations = static_cast<int>(to_int(k, v)); }},
      {"cg_max_iterations", [&](auto k, auto v) { c.train.cg.max_iterations = static_cast<int>(to_int(k, v)); }},
      {"cg_residual_tolerance", [&](auto k, auto v) { c.train.cg.residual_tolerance = to_double(k, v); }},
      {"cg_damping", [&](auto k, auto v) { c.train.cg.damping = to_double(k, v); }},
      {"standardize_advantages", [&](auto k, auto v) { c.train.standardize_advantages = to_bool(k, v); }},
      {"baseline_ridge", [&](auto k, auto v) { c.train.baseline_ridge = to_double(k, v); }},
      {"eval_episodes", [&](auto k, auto v) { c.train.eval_episodes = static_cast<int>(to_int(k, v)); }},
      {"seeds",
       [&](auto k, auto v) {
         c.seeds.clear();
         for (auto item : split(v, ',')) c.seeds.push_back(to_u64(k, item));
       }},
      {"output_dir", [&](auto, auto v) { c.output_dir = std::string(v); }},
      {"checkpoint_every", [&](auto k, auto v) { c.checkpoint_every = static_cast<int>(to_int(k, v)); }},
      {"record_wallclock", [&](auto k, auto v) { c.record_wallclock = to_bool(k, v); }},
  };

  for (const auto& [key, value] : read_entries(text)) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  if (!have_name) throw ConfigError("config is missing required key 'name'");
  if (!have_env) throw ConfigError("config is missing required key 'env'");
  if (c.name.find('/') != std::string::npos) throw ConfigError("config key 'name' must not contain '/'");
  if (c.seeds.empty()) throw ConfigError("config key 'seeds' must list at least one seed");
  if (c.horizon < 0) throw ConfigError("config key 'horizon' must be nonnegative");
  if (c.num_features <= 0) throw ConfigError("config key 'num_features' must be positive");
  if (!(c.bandwidth_floor > 0.0)) throw ConfigError("config key 'bandwidth_floor' must be positive");
  if (c.checkpoint_every < 0) throw ConfigError("config key 'checkpoint_every' must be nonnegative");
  if (c.train.trajectories_per_iter < 0) throw ConfigError("config key 'trajectories_per_iter' must be nonnegative");
  try {
    c.train_config(c.seeds.front()).validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "name = " << c.name << "\n";
  out << "env = " << to_string(c.env) << "\n";
  out << "init_mode = " << to_string(c.init_mode) << "\n";
  out << "termination = " << bool_text(c.termination) << "\n";
  out << "horizon = " << c.horizon << "\n";
  out << "policy = " << (c.policy == Architecture::linear ? "linear" : "rbf") << "\n";
  out << "num_features = " << c.num_features << "\n";
  out << "bandwidth_floor = " << format_double(c.bandwidth_floor) << "\n";
  out << "delta = " << format_double(c.train.delta) << "\n";
  out << "gamma = " << format_double(c.train.gamma) << "\n";
  out << "lambda = " << format_double(c.train.lambda) << "\n";
  out << "trajectories_per_iter = " << c.train.trajectories_per_iter << "\n";
  out << "iterations = " << c.train.iterations << "\n";
  out << "cg_max_iterations = " << c.train.cg.max_iterations << "\n";
  out << "cg_residual_tolerance = " << format_double(c.train.cg.residual_tolerance) << "\n";
  out << "cg_damping = " << format_double(c.train.cg.damping) << "\n";
  out << "standardize_advantages = " << bool_text(c.train.standardize_advantages) << "\n";
  out << "baseline_ridge = " << format_double(c.train.baseline_ridge) << "\n";
  out << "eval_episodes = " << c.train.eval_episodes << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << "\n";
  out << "output_dir = " << c.output_dir << "\n";
  out << "checkpoint_every = " << c.checkpoint_every << "\n";
  out << "record_wallclock = " << bool_text(c.record_wallclock) << "\n";
  return out.str();
}

PerturbSweepSpec parse_sweep_spec(std::string_view text) {
  PerturbSweepSpec s;
  for (const auto& [key, value] : read_entries(text)) {
    if (key == "magnitudes") {
      s.magnitudes.clear();
      for (auto item : split(value, ',')) {
        const double m = to_double(key, item);
        if (m < 0.0) bad_value(key, item, "a nonnegative magnitude");
        s.magnitudes.push_back(m);
      }
    } else if (key == "directions") {
      s.directions.clear();
      for (auto dir : split(value, ';')) {
        Vec d;
        for (auto item : split(dir, ',')) d.push_back(to_double(key, item));
        const double n = norm(d);
        if (!(n > 0.0)) bad_value(key, dir, "a nonzero direction");
        for (double& x : d) x /= n;
        s.directions.push_back(std::move(d));
      }
    } else if (key == "start_time") {
      s.start_time = to_double(key, value);
    } else if (key == "duration") {
      s.duration = to_double(key, value);
      if (s.duration < 0.0) bad_value(key, value, "a nonnegative duration");
    } else if (key == "episodes") {
      s.episodes = static_cast<int>(to_int(key, value));
      if (s.episodes < 1) bad_value(key, value, "a positive episode count");
    } else if (key == "init_mode") {
      s.init_mode = parse_enum(key, value, parse_init_mode);
    } else if (key == "seed") {
      s.seed = to_u64(key, value);
    } else {
      throw ConfigError("unknown sweep key '" + key + "'");
    }
  }
  if (s.magnitudes.empty()) throw ConfigError("sweep needs at least one magnitude");
  return s;
}

PerturbSweepSpec load_sweep_spec(const std::string& path) { return parse_sweep_spec(read_file(path)); }

}  // namespace natgrad::harness
