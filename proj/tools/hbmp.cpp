#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hbmp/harness.hpp"
#include "json.hpp"

namespace {

using namespace hbmp;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename F>
void with_output(const std::string& path, F&& f) {
  if (path.empty() || path == "-") {
    f(std::cout);
    return;
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  f(out);
}

// Task list from a benchmark config. `episodes`, when set, overrides the
// per-task counts in the file.
std::vector<BenchmarkTask> tasks_from(const std::string& doc, std::optional<int> episodes) {
  const json j = json::parse(doc);
  const int fallback = episodes.value_or(j.value("episodes", 40));
  if (!j.contains("tasks")) return default_tasks(fallback);
  std::vector<BenchmarkTask> out;
  for (const auto& t : j.at("tasks")) {
    BenchmarkTask b;
    b.name = t.at("name").get<std::string>();
    b.map = t.value("map", b.name);
    b.episodes = episodes.value_or(t.value("episodes", fallback));
    b.dynamic_agents = t.value("dynamic_agents", false);
    b.agents = t.value("agents", 0);
    out.push_back(b);
  }
  return out;
}

StateServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical behavior and motion planning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, checkpoint, out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { seed = s, seed_given = true; }, "random seed");
  app.add_option("--checkpoint", checkpoint, "model checkpoint to load");
  app.add_option("--out", out, "output directory or file");

  auto* train = app.add_subcommand("train", "imitation then PPO");
  int episodes_override = -1;
  bool no_il = false, sparse = false;
  train->add_option("--episodes", episodes_override, "PPO episode budget");
  train->add_flag("--random-init", no_il, "skip imitation");
  train->add_flag("--sparse", sparse, "terminal reward only");

  auto* bench = app.add_subcommand("benchmark", "greedy runs on the driving tasks");
  std::optional<int> bench_episodes;
  bool keep = false;
  bench->add_option("--episodes", bench_episodes, "episodes per task (default 40)");
  bench->add_flag("--keep-only", keep, "always keep the lane instead of using a model");

  auto* demo = app.add_subcommand("demo-serve", "stream states to a UI client");
  int port = 7878, demo_episodes = 1;
  std::string mode = "spectate";
  double pace = 2.0;
  demo->add_option("--port", port, "TCP port on 127.0.0.1 (0 picks one)");
  demo->add_option("--mode", mode, "spectate or demonstrate")
      ->check(CLI::IsMember({"spectate", "demonstrate"}));
  demo->add_option("--episodes", demo_episodes, "episodes to run");
  demo->add_option("--pace", pace, "decision windows per second when demonstrating");

  auto* equiv = app.add_subcommand("equivalence-check", "hierarchical vs coupled search");
  int max_k = 3;
  equiv->add_option("--max-k", max_k, "largest horizon")->check(CLI::Range(1, 4));

  auto* plot = app.add_subcommand("plot", "smoothed learning curves");
  std::vector<std::string> arms;
  int window = 10;
  plot->add_option("--arm", arms, "name=path/to/train_log.csv")->required();
  plot->add_option("--window", window, "moving-average window")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      TrainJob job = load_train_job(config_path.empty() ? "{}" : read_file(config_path));
      if (seed_given) job.seed = seed;
      if (episodes_override >= 0) job.trainer.episodes_total = episodes_override;
      if (no_il) job.il_init = false;
      if (sparse) job.trainer.sparse_reward = true;
      ActorCritic init;
      if (!checkpoint.empty()) load_checkpoint(checkpoint, init);
      const std::string dir = out.empty() ? "runs/train" : out;
      const TrainSummary s = run_train(job, dir, checkpoint.empty() ? nullptr : &init);
      std::cout << read_file(dir + "/summary.json");
      return s.ppo.aborted ? 3 : 0;
    }
    if (*bench) {
      ActorCritic model;
      if (!checkpoint.empty()) {
        load_checkpoint(checkpoint, model);
      } else if (!keep) {
        std::cerr << "benchmark needs --checkpoint or --keep-only\n";
        return 2;
      }
      const auto tasks = config_path.empty() ? default_tasks(bench_episodes.value_or(40))
                                             : tasks_from(read_file(config_path), bench_episodes);
      const BehaviorOverride forced = keep_only();
      const RunReport r = run_benchmark(model, tasks, seed, keep ? &forced : nullptr);
      with_output(out, [&](std::ostream& o) { write_report_csv(o, r); });
      return 0;
    }
    if (*demo) {
      ActorCritic model;
      if (!checkpoint.empty()) {
        load_checkpoint(checkpoint, model);
      } else {
        model.init(seed);
      }
      DemoConfig cfg;
      cfg.mode = mode == "demonstrate" ? DemoMode::kDemonstrate : DemoMode::kSpectate;
      cfg.env.scenario.kind = "slow_blocker";
      if (!config_path.empty()) cfg.env.scenario = load_scenario(read_file(config_path));
      cfg.env.kind = cfg.mode == DemoMode::kDemonstrate ? WorldKind::kEvent : WorldKind::kDynamics;
      cfg.episodes = demo_episodes;
      cfg.seed = seed;
      cfg.pace_hz = pace;
      StateServer server(port, cfg.mode);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on 127.0.0.1:" << server.port() << " (" << mode << ")\n";
      const std::string dir = out.empty() ? "runs/demo" : out;
      std::filesystem::create_directories(dir);
      std::ofstream log(dir + "/transitions.csv");
      run_demo_session(server, model, cfg, &log);
      if (cfg.mode == DemoMode::kDemonstrate) save_checkpoint(dir + "/checkpoint.bin", model);
      g_server = nullptr;
      return 0;
    }
    if (*equiv) {
      bool ok = false;
      with_output(out, [&](std::ostream& o) { ok = run_equivalence(max_k, o); });
      std::cerr << (ok ? "all horizons equal\n" : "MISMATCH\n");
      return ok ? 0 : 1;
    }
    if (*plot) {
      std::vector<PlotArm> parsed;
      for (const auto& a : arms) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) {
          std::cerr << "--arm expects name=path, got " << a << '\n';
          return 2;
        }
        parsed.push_back({a.substr(0, eq), a.substr(eq + 1)});
      }
      with_output(out, [&](std::ostream& o) { emit_plots(parsed, window, o); });
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
