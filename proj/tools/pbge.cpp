// Command-line front end: train, resume, eval, baseline, report, serve.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "pbge/harness/report.hpp"
#include "pbge/harness/train.hpp"
#include "pbge/server/tcp.hpp"
#include "pbge/tensor/serialize.hpp"

using namespace pbge;
using namespace pbge::harness;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeAbort = 3;

server::EnvServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

void print_metrics(const std::string& who, const Metrics& m) {
  std::cout << who << ": episodes " << m.episodes << "  reward " << m.mean_reward << " +- " << m.reward_std
            << "  length " << m.mean_length << " +- " << m.length_std << "  success " << m.success_rate
            << "  efficiency " << m.efficiency << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pushing-gripper reinforcement-learning workbench"};
  app.require_subcommand(1);

  std::string algo = "ppo", recipe_name, profile = "smoke", out, run_dir, checkpoint, config_file;
  std::uint64_t seed = 0, timesteps = 0, stop_after = 0, port = server::kDefaultPort;
  std::size_t episodes = 10, final_episodes = 0;
  bool no_checkpoints = false, frames = false, quiet = false;

  auto* train_cmd = app.add_subcommand("train", "Train an agent on a recipe");
  train_cmd->add_option("--algo", algo, "dqn, double_dqn, a2c, ppo or reinforce")->required();
  train_cmd->add_option("--recipe", recipe_name, "Recipe name (I..VI, eased) or file")->required();
  train_cmd->add_option("--seed", seed, "Run seed");
  train_cmd->add_option("--timesteps", timesteps, "Total agent steps (recipe value when omitted)");
  train_cmd->add_option("--out", out, "Run directory")->required();
  train_cmd->add_option("--profile", profile, "full or smoke")->capture_default_str();
  train_cmd->add_option("--stop-after", stop_after, "Checkpoint and stop after this many steps");
  train_cmd->add_option("--final-episodes", final_episodes, "Episodes for the final report");
  train_cmd->add_flag("--no-checkpoints", no_checkpoints, "Skip checkpoint files");
  train_cmd->add_flag("--frames", frames, "Write a debug frame at each evaluation");
  train_cmd->add_flag("--quiet", quiet, "No progress output");

  auto* resume_cmd = app.add_subcommand("resume", "Continue a run from its latest checkpoint");
  resume_cmd->add_option("--run", run_dir, "Run directory")->required();
  resume_cmd->add_option("--stop-after", stop_after, "Checkpoint and stop after this many steps");
  resume_cmd->add_flag("--quiet", quiet, "No progress output");

  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--episodes", episodes, "Evaluation episodes")->capture_default_str();

  auto* base_cmd = app.add_subcommand("baseline", "Random-agent baseline for a recipe");
  base_cmd->add_option("--recipe", recipe_name, "Recipe name or file")->required();
  base_cmd->add_option("--profile", profile, "full or smoke")->capture_default_str();
  base_cmd->add_option("--episodes", episodes, "Episodes")->capture_default_str();
  base_cmd->add_option("--seed", seed, "Seed");

  auto* report_cmd = app.add_subcommand("report", "CSV and SVG charts for a run");
  report_cmd->add_option("--run", run_dir, "Run directory")->required();

  auto* serve_cmd = app.add_subcommand("serve", "Serve environments over TCP");
  serve_cmd->add_option("--port", port, "TCP port")->capture_default_str();
  serve_cmd->add_option("--recipe", recipe_name, "Base environment from a recipe");
  serve_cmd->add_option("--profile", profile, "full or smoke")->capture_default_str();
  serve_cmd->add_option("--config", config_file, "Base environment from a key-value file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) {
      TrainOptions o;
      o.algo = algo;
      o.seed = seed;
      if (train_cmd->count("--timesteps")) o.total_timesteps = timesteps;
      if (train_cmd->count("--stop-after")) o.stop_after = stop_after;
      if (train_cmd->count("--final-episodes")) o.final_episodes = final_episodes;
      o.checkpoints = !no_checkpoints;
      o.save_frames = frames;
      o.log = quiet ? nullptr : &std::cout;
      const RunResult r = train(Recipe::load(recipe_name, profile), o, out);
      if (r.final_metrics) print_metrics(algo, *r.final_metrics);
      if (r.baseline) print_metrics("baseline", *r.baseline);
      if (!r.finished) std::cout << "stopped at step " << r.steps << "; resume with: pbge resume --run " << out << '\n';
    } else if (*resume_cmd) {
      std::optional<std::uint64_t> stop;
      if (resume_cmd->count("--stop-after")) stop = stop_after;
      const RunResult r = resume(run_dir, stop, quiet ? nullptr : &std::cout);
      if (r.final_metrics) print_metrics("agent", *r.final_metrics);
      if (r.baseline) print_metrics("baseline", *r.baseline);
    } else if (*eval_cmd) {
      print_metrics("greedy", evaluate_checkpoint(checkpoint, episodes));
    } else if (*base_cmd) {
      const Recipe r = Recipe::load(recipe_name, profile);
      print_metrics("random", random_baseline(r.eval_env, episodes, seed));
    } else if (*report_cmd) {
      report(run_dir);
      std::cout << "wrote " << run_dir << "/final_report\n";
    } else if (*serve_cmd) {
      env::EnvConfig base;
      if (!recipe_name.empty()) base = Recipe::load(recipe_name, profile).env;
      if (!config_file.empty()) {
        KeyValueConfig kv;
        base.to(kv);
        kv.merge(KeyValueConfig::load(config_file));
        base = env::EnvConfig::from(kv);
      }
      server::ServerOptions so;
      so.port = static_cast<std::uint16_t>(port);
      server::EnvServer srv(base, so);
      srv.start();
      g_server = &srv;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving on 127.0.0.1:" << srv.port() << '\n' << std::flush;
      srv.serve();
      g_server = nullptr;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StartupError& e) {
    std::cerr << "startup error: " << e.what() << '\n';
    return kConfigError;
  } catch (const RunAborted& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kRuntimeAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeAbort;
  }
  return kOk;
}
