#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "hbmp/training.hpp"

namespace hbmp {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Everything `hbmp train` reads from its config file.
struct TrainJob {
  std::uint64_t seed = 1;
  ScenarioConfig scenario;          // PPO runs here in the dynamics world
  ScenarioConfig dagger_scenario;   // imitation runs here in the event world
  GridFrame frame = GridFrame::kLaneCurvilinear;
  bool il_init = true;
  TrainerConfig trainer;
  int holdout_episodes = 100;
};

/// Parses a train config document; unknown keys and bad types throw.
TrainJob load_train_job(const std::string& document);

struct TrainSummary {
  std::optional<double> agreement;  // held-out expert agreement after imitation
  PpoRunResult ppo;
};

/// Imitation (when il_init) then PPO. Writes dagger_log.csv, train_log.csv,
/// eval_log.csv, checkpoint.bin and summary.json into `out_dir`. When
/// `init` is given the model starts from it instead of a fresh init.
TrainSummary run_train(const TrainJob& job, const std::string& out_dir,
                       const ActorCritic* init = nullptr);

struct BenchmarkTask {
  std::string name;
  std::string map;
  int episodes = 40;
  bool dynamic_agents = false;
  int agents = 0;
};

/// straight, one_turn, navigation, nav_dynamic.
std::vector<BenchmarkTask> default_tasks(int episodes);

struct TaskReport {
  std::string task;
  int episodes = 0;
  std::map<Outcome, int> counts;
  double mean_return = 0.0;
  double mean_time = 0.0;
};

struct RunReport {
  std::vector<TaskReport> tasks;
};

/// Greedy episodes per task in the dynamics world. `forced` replaces the
/// actor (the keep-only baseline).
RunReport run_benchmark(const ActorCritic& model, const std::vector<BenchmarkTask>& tasks,
                        std::uint64_t seed, const BehaviorOverride* forced = nullptr);
void write_report_csv(std::ostream& out, const RunReport& report);

struct PlotArm {
  std::string name;
  std::string log_path;  // a train_log.csv
};

/// Trailing moving averages of mean_r_T and mean_return per arm, as CSV.
void emit_plots(const std::vector<PlotArm>& arms, int window, std::ostream& out);
std::vector<double> moving_average(const std::vector<double>& x, int window);

/// Runs the equivalence check on the builtin scenes for K = 1..max_horizon
/// and writes one CSV row per (scene, K). Returns true when all agree.
bool run_equivalence(int max_horizon, std::ostream& out, double gamma = 0.99);

// ---- state streaming ---------------------------------------------------

inline constexpr int kProtocolVersion = 1;

/// Bounded FIFO that drops its oldest entry when full.
class SnapshotQueue {
 public:
  explicit SnapshotQueue(std::size_t capacity) : capacity_(capacity) {}
  void push(std::string line);
  std::optional<std::string> pop();
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] long dropped() const;
  void clear();

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<std::string> items_;
  long dropped_ = 0;
};

/// Single-slot command box; a newer command overwrites an unread one.
class CommandMailbox {
 public:
  void put(Behavior b);
  std::optional<Behavior> take();
  /// Waits up to `timeout_ms` for a command.
  std::optional<Behavior> wait_take(int timeout_ms);
  void wake();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Behavior> slot_;
};

enum class DemoMode : std::uint8_t { kSpectate, kDemonstrate };
const char* to_string(DemoMode m);

/// Line-delimited JSON over TCP, one client at a time. Never blocks the
/// caller of publish().
class StateServer {
 public:
  StateServer(int port, DemoMode mode, std::size_t queue_capacity = 64);
  ~StateServer();
  StateServer(const StateServer&) = delete;
  StateServer& operator=(const StateServer&) = delete;

  [[nodiscard]] int port() const { return port_; }
  [[nodiscard]] DemoMode mode() const { return mode_; }
  void publish(std::string line);
  CommandMailbox& mailbox() { return mailbox_; }
  [[nodiscard]] bool connected() const { return connected_; }
  [[nodiscard]] bool paused() const { return paused_; }
  [[nodiscard]] bool stopping() const { return stop_; }
  [[nodiscard]] long dropped() const { return queue_.dropped(); }
  void stop();

 private:
  void run();
  void serve_client(int fd);
  bool handle_line(int fd, const std::string& line);

  int listen_fd_ = -1;
  int port_ = 0;
  DemoMode mode_;
  SnapshotQueue queue_;
  CommandMailbox mailbox_;
  std::atomic<bool> connected_{false};
  std::atomic<bool> paused_{false};
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

/// Snapshot message for the UI.
std::string snapshot_message(const WorldState& w, const Observation& obs, long decision,
                             Behavior current, const PlanStep* plan,
                             const std::map<Behavior, double>* behavior_costs, bool awaiting);

/// Best-sample cost of each behavior from the current state.
std::map<Behavior, double> behavior_costs(const WorldState& w, const PlannerConfig& cfg);

struct DemoConfig {
  EnvConfig env;
  DemoMode mode = DemoMode::kSpectate;
  int episodes = 1;
  std::uint64_t seed = 1;
  double pace_hz = 2.0;  // decision windows per second in demonstrate mode
  TrainerConfig trainer;
};

/// Spectate: the policy drives greedily and every step is published.
/// Demonstrate: DAgger with the connected human as expert; a decision waits
/// for a command and the session pauses while nobody is connected.
/// Transition log rows: episode,decision,label,executed.
void run_demo_session(StateServer& server, ActorCritic& model, const DemoConfig& cfg,
                      std::ostream* transition_log);

}  // namespace hbmp
