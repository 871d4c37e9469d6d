#include <csignal>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "natgrad/errors.hpp"
#include "natgrad/harness/checkpoint.hpp"
#include "natgrad/harness/config.hpp"
#include "natgrad/harness/experiment.hpp"
#include "natgrad/kernels.hpp"
#include "natgrad/live/server.hpp"

using namespace natgrad;
using namespace natgrad::harness;

namespace {

EnvSpec spec_for(const Policy& policy, const std::string& env_name, InitMode mode) {
  const auto implied = env_from_dims(policy.obs_dim(), policy.act_dim());
  if (!implied) throw ContractViolation("checkpoint dims match no environment");
  const EnvId id = env_name.empty() ? *implied : parse_env_id(env_name);
  if (id != *implied) {
    throw ContractViolation("checkpoint is for " + std::string(to_string(*implied)) + ", not " + env_name);
  }
  return make_env_spec(id, mode, false);
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

std::vector<int> parse_counts(const std::string& text) {
  std::vector<int> counts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(item, &used);
      if (used != item.size() || n <= 0) throw std::invalid_argument(item);
      counts.push_back(n);
    } catch (const std::exception&) {
      throw ConfigError("bad feature count '" + item + "'");
    }
  }
  if (counts.empty()) throw ConfigError("--counts needs at least one value");
  return counts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalized natural policy gradient toolkit"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train every seed of an experiment config");
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  train_cmd->add_option("--config", config_path, "experiment config file")->required();
  train_cmd->add_option("--seed", seed_override, "train only this seed");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, env_name, mode_name = "mean", init_mode_name = "narrow", trajectory_csv;
  int episodes = 10;
  std::uint64_t seed = 0;
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--env", env_name, "environment (default: implied by the checkpoint)");
  eval_cmd->add_option("--mode", mode_name)->check(CLI::IsMember({"stoc", "mean"}));
  eval_cmd->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--init-mode", init_mode_name)->check(CLI::IsMember({"narrow", "diverse"}));
  eval_cmd->add_option("--seed", seed);
  eval_cmd->add_option("--trajectory-csv", trajectory_csv, "write the first episode step by step");

  auto* sweep_cmd = app.add_subcommand("sweep", "perturbation sweep of a checkpoint");
  std::string sweep_path, out_path;
  sweep_cmd->add_option("--checkpoint", checkpoint)->required();
  sweep_cmd->add_option("--sweep-config", sweep_path)->required();
  sweep_cmd->add_option("--env", env_name);
  sweep_cmd->add_option("--out", out_path, "CSV path (default: stdout)");

  auto* report_cmd = app.add_subcommand("report-threshold", "episodes to reach a fraction of the linear final score");
  std::string report_dir;
  double fraction = 0.9;
  report_cmd->add_option("--dir", report_dir, "directory holding experiment outputs")->required();
  report_cmd->add_option("--fraction", fraction);
  report_cmd->add_option("--out", out_path, "CSV path (default: stdout)");

  auto* study_cmd = app.add_subcommand("study-features", "linear vs rbf feature-count study");
  std::string counts_text = "25,100,300";
  study_cmd->add_option("--config", config_path)->required();
  study_cmd->add_option("--counts", counts_text);

  auto* serve_cmd = app.add_subcommand("serve", "live WebSocket service");
  live::ServerOptions server;
  std::string ui_dir;
  serve_cmd->add_option("--checkpoint", checkpoint)->required();
  serve_cmd->add_option("--port", server.port)->required();
  serve_cmd->add_option("--env", env_name);
  serve_cmd->add_option("--ui-dir", ui_dir, "static UI bundle");
  serve_cmd->add_option("--seed", seed);
  serve_cmd->add_option("--address", server.address);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) {
      ExperimentConfig config = load_config(config_path);
      if (seed_override) config.seeds = {*seed_override};
      const auto result = run_experiment(config, &std::cerr);
      std::cout << result.dir.string() << "\n";
    } else if (*eval_cmd) {
      const Policy policy = load_checkpoint(checkpoint);
      const EnvSpec spec = spec_for(policy, env_name, parse_init_mode(init_mode_name));
      const ActionMode mode = mode_name == "stoc" ? ActionMode::stochastic : ActionMode::mean;
      const Rng rng(seed);
      const EvalResult r = evaluate(policy, spec, episodes, mode, rng);
      std::cout << "mean_return " << format_double(r.mean_return) << "\n";
      for (std::size_t i = 0; i < r.returns.size(); ++i) {
        std::cout << "episode " << i << " " << format_double(r.returns[i]) << "\n";
      }
      if (!trajectory_csv.empty()) {
        write_text_file(trajectory_csv, format_trajectory_csv(rollout(policy, spec, rng.split(0), mode)));
      }
    } else if (*sweep_cmd) {
      const Policy policy = load_checkpoint(checkpoint);
      const PerturbSweepSpec sweep = load_sweep_spec(sweep_path);
      const EnvSpec spec = spec_for(policy, env_name, sweep.init_mode);
      const auto rows = perturb_sweep(policy, spec, sweep);
      emit(format_sweep_csv(spec.id, rows), out_path);
    } else if (*report_cmd) {
      const auto curves = load_threshold_curves(report_dir);
      emit(format_threshold_csv(episodes_to_threshold(curves, fraction)), out_path);
    } else if (*study_cmd) {
      const ExperimentConfig config = load_config(config_path);
      const auto counts = parse_counts(counts_text);
      const auto result = feature_count_study(config, counts, &std::cerr);
      std::cout << result.dir.string() << "\n";
    } else if (*serve_cmd) {
      server.checkpoint = checkpoint;
      server.ui_dir = ui_dir;
      server.session.seed = seed;
      if (!env_name.empty()) server.session.env = parse_env_id(env_name);

      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      live::Server srv(server);
      const unsigned short port = srv.start();
      std::cout << "listening on " << server.address << ":" << port << std::endl;
      int received = 0;
      sigwait(&signals, &received);
      srv.stop();
    }
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const live::SessionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
