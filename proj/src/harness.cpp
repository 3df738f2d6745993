#include "hbmp/harness.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hbmp {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "' in " + where);
  }
}

ScenarioConfig scenario_from(const json& j) {
  try {
    return load_scenario(j.dump());
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

TrainJob load_train_job(const std::string& document) {
  json j;
  try {
    j = json::parse(document);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(j,
             {"seed", "scenario", "dagger_scenario", "frame", "il_init", "sparse_reward",
              "episodes", "holdout_episodes", "ppo", "dagger"},
             "config");
  TrainJob job;
  job.scenario.kind = "slow_blocker";
  read_field(j, "seed", job.seed);
  if (j.contains("scenario")) job.scenario = scenario_from(j["scenario"]);
  job.dagger_scenario = job.scenario;
  if (j.contains("dagger_scenario")) job.dagger_scenario = scenario_from(j["dagger_scenario"]);
  if (j.contains("frame")) {
    const std::string f = j["frame"].is_string() ? j["frame"].get<std::string>() : "";
    if (f == "lane_curvilinear") {
      job.frame = GridFrame::kLaneCurvilinear;
    } else if (f == "vehicle_centric") {
      job.frame = GridFrame::kVehicleCentric;
    } else {
      throw ConfigError("config: frame must be lane_curvilinear or vehicle_centric");
    }
  }
  read_field(j, "il_init", job.il_init);
  read_field(j, "sparse_reward", job.trainer.sparse_reward);
  read_field(j, "episodes", job.trainer.episodes_total);
  read_field(j, "holdout_episodes", job.holdout_episodes);
  TrainerConfig& t = job.trainer;
  if (j.contains("ppo")) {
    const json& p = j["ppo"];
    check_keys(p,
               {"gamma", "batch", "lr_actor", "lr_critic", "eps_clip", "gae_lambda",
                "entropy_coef", "epochs_per_iter", "episodes_per_iter", "max_grad_norm",
                "eval_interval", "eval_episodes", "stop_at_threshold", "success_threshold",
                "max_decisions"},
               "ppo");
    read_field(p, "gamma", t.gamma);
    read_field(p, "batch", t.batch);
    read_field(p, "lr_actor", t.lr_actor);
    read_field(p, "lr_critic", t.lr_critic);
    read_field(p, "eps_clip", t.eps_clip);
    read_field(p, "gae_lambda", t.gae_lambda);
    read_field(p, "entropy_coef", t.entropy_coef);
    read_field(p, "epochs_per_iter", t.epochs_per_iter);
    read_field(p, "episodes_per_iter", t.episodes_per_iter);
    read_field(p, "max_grad_norm", t.max_grad_norm);
    read_field(p, "eval_interval", t.eval_interval);
    read_field(p, "eval_episodes", t.eval_episodes);
    read_field(p, "stop_at_threshold", t.stop_at_threshold);
    read_field(p, "success_threshold", t.success_threshold);
    read_field(p, "max_decisions", t.max_decisions);
  }
  if (j.contains("dagger")) {
    const json& d = j["dagger"];
    check_keys(d,
               {"episodes", "alpha_start", "anneal_start_ep", "anneal_end_ep", "round_episodes",
                "steps_per_round", "batch", "lr", "max_decisions"},
               "dagger");
    DaggerConfig& c = t.dagger;
    read_field(d, "episodes", c.episodes);
    read_field(d, "alpha_start", c.alpha_start);
    read_field(d, "anneal_start_ep", c.anneal_start_ep);
    read_field(d, "anneal_end_ep", c.anneal_end_ep);
    read_field(d, "round_episodes", c.round_episodes);
    read_field(d, "steps_per_round", c.steps_per_round);
    read_field(d, "batch", c.batch);
    read_field(d, "lr", c.lr);
    read_field(d, "max_decisions", c.max_decisions);
  }
  if (!(t.gamma > 0 && t.gamma < 1)) throw ConfigError("config: gamma must lie in (0, 1)");
  if (!(t.eps_clip > 0)) throw ConfigError("config: eps_clip must be positive");
  if (!(t.lr_actor > 0 && t.lr_critic > 0 && t.dagger.lr > 0)) {
    throw ConfigError("config: learning rates must be positive");
  }
  if (t.episodes_total < 0 || t.episodes_per_iter < 1 || t.batch < 1) {
    throw ConfigError("config: episode and batch counts must be positive");
  }
  if (t.dagger.anneal_end_ep <= t.dagger.anneal_start_ep) {
    throw ConfigError("config: anneal_end_ep must exceed anneal_start_ep");
  }
  return job;
}

TrainSummary run_train(const TrainJob& job, const std::string& out_dir, const ActorCritic* init) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  ActorCritic model;
  if (init) {
    model = *init;
  } else {
    model.init(job.seed);
  }
  TrainSummary summary;

  if (job.il_init) {
    EnvConfig ev;
    ev.scenario = job.dagger_scenario;
    ev.kind = WorldKind::kEvent;
    ev.frame = job.frame;
    std::ofstream dlog(dir / "dagger_log.csv");
    const Expert expert = make_scripted_expert();
    dagger_train(model, ev, expert, job.trainer, job.seed, &dlog);
    summary.agreement = expert_agreement(model, ev, expert, job.holdout_episodes, job.seed,
                                         job.trainer.dagger.max_decisions);
  }

  EnvConfig dyn;
  dyn.scenario = job.scenario;
  dyn.kind = WorldKind::kDynamics;
  dyn.frame = job.frame;
  dyn.planner.frame = job.frame;
  {
    std::ofstream tlog(dir / "train_log.csv");
    std::ofstream elog(dir / "eval_log.csv");
    summary.ppo = run_ppo(model, dyn, job.trainer, job.seed, &tlog, &elog);
  }
  save_checkpoint((dir / "checkpoint.bin").string(), model);

  json s;
  s["seed"] = job.seed;
  s["il_init"] = job.il_init;
  s["sparse_reward"] = job.trainer.sparse_reward;
  s["agreement"] = summary.agreement ? json(*summary.agreement) : json(nullptr);
  s["episodes_run"] = summary.ppo.episodes_run;
  s["episodes_to_threshold"] = summary.ppo.episodes_to_threshold
                                   ? json(*summary.ppo.episodes_to_threshold)
                                   : json(nullptr);
  s["final_success_rate"] = summary.ppo.last_eval.success_rate;
  s["final_mean_return"] = summary.ppo.last_eval.mean_return;
  s["baseline_success_rate"] = summary.ppo.baseline.success_rate;
  s["baseline_mean_return"] = summary.ppo.baseline.mean_return;
  s["aborted"] = summary.ppo.aborted;
  std::ofstream(dir / "summary.json") << s.dump(2) << '\n';
  return summary;
}

std::vector<BenchmarkTask> default_tasks(int episodes) {
  return {{"straight", "straight", episodes, false, 0},
          {"one_turn", "one_turn", episodes, false, 0},
          {"navigation", "town1", episodes, false, 0},
          {"nav_dynamic", "town1", episodes, true, 6}};
}

RunReport run_benchmark(const ActorCritic& model, const std::vector<BenchmarkTask>& tasks,
                        std::uint64_t seed, const BehaviorOverride* forced) {
  RunReport report;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const BenchmarkTask& t = tasks[i];
    EnvConfig env;
    env.scenario.map = t.map;
    env.scenario.kind = t.dynamic_agents ? "traffic" : "empty";
    env.scenario.traffic_agents = t.dynamic_agents ? t.agents : 0;
    env.kind = WorldKind::kDynamics;
    const EvalResult r = evaluate(model, env, t.episodes, derive_seed(seed, 30, i), forced);
    TaskReport tr;
    tr.task = t.name;
    tr.episodes = r.episodes;
    tr.counts = r.counts;
    tr.mean_return = r.mean_return;
    tr.mean_time = r.mean_time;
    report.tasks.push_back(tr);
  }
  return report;
}

void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "task,episodes,goal_reached,collision,wrong_lane,red_light_violation,overtime,"
         "mean_return,mean_time\n";
  for (const auto& t : report.tasks) {
    auto n = [&](Outcome o) {
      const auto it = t.counts.find(o);
      return it == t.counts.end() ? 0 : it->second;
    };
    out << t.task << ',' << t.episodes << ',' << n(Outcome::kGoalReached) << ','
        << n(Outcome::kCollision) << ',' << n(Outcome::kWrongLane) << ','
        << n(Outcome::kRedLightViolation) << ',' << n(Outcome::kOvertime) << ','
        << t.mean_return << ',' << t.mean_time << '\n';
  }
}

std::vector<double> moving_average(const std::vector<double>& x, int window) {
  if (window < 1) throw std::invalid_argument("moving average window must be >= 1");
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum += x[i];
    if (i >= static_cast<std::size_t>(window)) sum -= x[i - window];
    const std::size_t n = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = window == 1 ? x[i] : sum / static_cast<double>(n);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void emit_plots(const std::vector<PlotArm>& arms, int window, std::ostream& out) {
  out << "arm,episodes,r_T,r_T_smooth,return,return_smooth\n";
  for (const auto& arm : arms) {
    std::ifstream in(arm.log_path);
    if (!in) throw std::invalid_argument("plot: cannot open '" + arm.log_path + "'");
    std::string line;
    std::getline(in, line);
    const auto header = split_csv(line);
    auto col = [&](const char* name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) {
        throw std::invalid_argument(std::string("plot: '") + arm.log_path + "' lacks column " + name);
      }
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ce = col("episodes"), ct = col("mean_r_T"), cr = col("mean_return");
    std::vector<std::string> episodes;
    std::vector<double> rt, ret;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() < header.size()) throw std::invalid_argument("plot: short row in " + arm.log_path);
      episodes.push_back(cells[ce]);
      rt.push_back(std::stod(cells[ct]));
      ret.push_back(std::stod(cells[cr]));
    }
    const auto srt = moving_average(rt, window);
    const auto sret = moving_average(ret, window);
    for (std::size_t i = 0; i < rt.size(); ++i) {
      out << arm.name << ',' << episodes[i] << ',' << rt[i] << ',' << srt[i] << ',' << ret[i]
          << ',' << sret[i] << '\n';
    }
  }
}

bool run_equivalence(int max_horizon, std::ostream& out, double gamma) {
  out << "scene,horizon,behavior_sequences,coupled_sequences,hierarchical,coupled,equal,"
         "best_sequence\n";
  bool ok = true;
  const PlannerConfig planner;
  for (const auto& [name, world] : equivalence_scenes()) {
    for (int k = 1; k <= max_horizon; ++k) {
      const auto r = hierarchical_equivalence_check(world, k, planner, gamma);
      ok = ok && r.equal();
      out << name << ',' << k << ',' << r.sequences << ',' << r.coupled_sequences << ','
          << std::setprecision(17) << r.hierarchical << ',' << r.coupled << ','
          << (r.equal() ? 1 : 0) << ',';
      for (std::size_t i = 0; i < r.best_sequence.size(); ++i) {
        out << (i ? " " : "") << to_string(r.best_sequence[i]);
      }
      out << std::setprecision(6) << '\n';
    }
  }
  return ok;
}

// ---- queue and mailbox --------------------------------------------------

void SnapshotQueue::push(std::string line) {
  std::lock_guard<std::mutex> lock(mu_);
  if (items_.size() >= capacity_) {
    items_.pop_front();
    ++dropped_;
  }
  items_.push_back(std::move(line));
}

std::optional<std::string> SnapshotQueue::pop() {
  std::lock_guard<std::mutex> lock(mu_);
  if (items_.empty()) return std::nullopt;
  std::string s = std::move(items_.front());
  items_.pop_front();
  return s;
}

std::size_t SnapshotQueue::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return items_.size();
}

long SnapshotQueue::dropped() const {
  std::lock_guard<std::mutex> lock(mu_);
  return dropped_;
}

void SnapshotQueue::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  items_.clear();
}

void CommandMailbox::put(Behavior b) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    slot_ = b;
  }
  cv_.notify_all();
}

std::optional<Behavior> CommandMailbox::take() {
  std::lock_guard<std::mutex> lock(mu_);
  auto b = slot_;
  slot_.reset();
  return b;
}

std::optional<Behavior> CommandMailbox::wait_take(int timeout_ms) {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] { return slot_.has_value(); });
  auto b = slot_;
  slot_.reset();
  return b;
}

void CommandMailbox::wake() { cv_.notify_all(); }

const char* to_string(DemoMode m) {
  return m == DemoMode::kSpectate ? "spectate" : "demonstrate";
}

// ---- server -------------------------------------------------------------

namespace {

bool send_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string message(const json& j) { return j.dump() + "\n"; }

json error_msg(const std::string& what) { return {{"type", "error"}, {"message", what}}; }

}  // namespace

StateServer::StateServer(int port, DemoMode mode, std::size_t queue_capacity)
    : mode_(mode), queue_(queue_capacity) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("demo server: socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 1) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("demo server: cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread([this] { run(); });
}

StateServer::~StateServer() {
  stop();
  if (thread_.joinable()) thread_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void StateServer::stop() {
  stop_ = true;
  mailbox_.wake();
}

void StateServer::publish(std::string line) {
  if (!connected_) return;
  queue_.push(std::move(line));
}

void StateServer::run() {
  while (!stop_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    queue_.clear();
    connected_ = true;
    serve_client(fd);
    connected_ = false;
    ::close(fd);
  }
}

void StateServer::serve_client(int fd) {
  json hello{{"type", "hello"}, {"version", kProtocolVersion}, {"mode", to_string(mode_)}};
  if (!send_all(fd, message(hello))) return;
  std::string buffer;
  char chunk[4096];
  while (!stop_) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, 10);
    if (ready > 0) {
      if (p.revents & (POLLERR | POLLHUP | POLLNVAL) && !(p.revents & POLLIN)) return;
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) return;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        const std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty() && !handle_line(fd, line)) return;
      }
      if (buffer.size() > (1 << 16)) {
        buffer.clear();
        if (!send_all(fd, message(error_msg("line too long")))) return;
      }
    }
    while (auto s = queue_.pop()) {
      if (!send_all(fd, *s)) return;
    }
  }
}

bool StateServer::handle_line(int fd, const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    return send_all(fd, message(error_msg("malformed message")));
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    return send_all(fd, message(error_msg("message needs a string 'type'")));
  }
  const std::string type = j["type"];
  if (type == "hello") {
    if (j.value("version", -1) != kProtocolVersion) {
      return send_all(fd, message(error_msg("unsupported protocol version")));
    }
    return send_all(fd, message({{"type", "ack"}, {"of", "hello"}}));
  }
  if (type == "pause" || type == "resume") {
    paused_ = type == "pause";
    mailbox_.wake();
    return send_all(fd, message({{"type", "ack"}, {"of", type}}));
  }
  if (type == "command") {
    if (mode_ != DemoMode::kDemonstrate) {
      return send_all(fd, message(error_msg("commands are ignored in spectate mode")));
    }
    const auto b = j.contains("behavior") && j["behavior"].is_string()
                       ? behavior_from_string(j["behavior"].get<std::string>())
                       : std::nullopt;
    if (!b) return send_all(fd, message(error_msg("unknown behavior")));
    mailbox_.put(*b);
    return send_all(fd, message({{"type", "ack"}, {"of", "command"}, {"behavior", to_string(*b)}}));
  }
  return send_all(fd, message(error_msg("unknown message type '" + type + "'")));
}

// ---- snapshots and sessions -----------------------------------------------

std::map<Behavior, double> behavior_costs(const WorldState& w, const PlannerConfig& cfg) {
  std::map<Behavior, double> out;
  const RoadProfile profile = build_profile(w);
  for (Behavior b : kAllBehaviors) {
    const Behavior resolved = resolve_behavior(b, profile);
    const LaneIndex target = target_lane(w, resolved).value_or(w.ego_lane);
    const ReferencePath ref = reference_path(w, target);
    const double v_ref = reference_velocity(resolved, w.ego.v, w.speed_limit(),
                                            w.config.limits.a_max, 0.1, cfg.horizon)
                             .v_ref;
    WorldState probe = w;
    probe.config.dt = 0.1;
    const PlanStep step = plan_once(probe, resolved, ref, v_ref, cfg);
    out[b] = step.chosen ? step.costs[*step.chosen].c_total
                         : emergency_stop(probe, ref, cfg).second.c_total;
  }
  return out;
}

namespace {

json pose_json(const VehicleState& v) {
  return {{"x", v.x}, {"y", v.y}, {"psi", v.psi}, {"v", v.v}, {"length", v.length},
          {"width", v.width}};
}

}  // namespace

std::string snapshot_message(const WorldState& w, const Observation& obs, long decision,
                             Behavior current, const PlanStep* plan,
                             const std::map<Behavior, double>* costs, bool awaiting) {
  json j;
  j["type"] = "snapshot";
  j["time"] = w.time;
  j["decision"] = decision;
  j["behavior"] = to_string(current);
  j["awaiting_command"] = awaiting;
  j["outcome"] = to_string(w.status.outcome);
  j["ego"] = pose_json(w.ego);
  json agents = json::array();
  for (const auto& a : w.agents) agents.push_back(pose_json(a.state));
  j["agents"] = agents;
  json lanes = json::array();
  constexpr double kView = 60.0;
  for (const auto& lane : w.road().lanes()) {
    const auto pts = lane.centerline.points();
    bool near = false;
    for (const auto& p : pts) {
      if (std::hypot(p.x - w.ego.x, p.y - w.ego.y) < kView) {
        near = true;
        break;
      }
    }
    if (!near) continue;
    json line = json::array();
    for (const auto& p : pts) line.push_back({p.x, p.y});
    lanes.push_back({{"id", lane.id}, {"width", lane.width}, {"points", line}});
  }
  j["lanes"] = lanes;
  std::string cells;
  cells.reserve(obs.grid.cells.size());
  for (auto c : obs.grid.cells) cells.push_back(c ? '1' : '0');
  j["grid"] = {{"rows", obs.grid.rows()}, {"cols", obs.grid.cols()},
               {"frame", to_string(obs.grid.frame)}, {"cells", cells}};
  json profile;
  const auto values = obs.profile.values();
  for (std::size_t i = 0; i < values.size(); ++i) profile[RoadProfile::names()[i]] = values[i];
  j["profile"] = profile;
  if (costs) {
    json c;
    for (const auto& [b, v] : *costs) c[to_string(b)] = v;
    j["behavior_costs"] = c;
  }
  json samples = json::array();
  if (plan) {
    for (std::size_t i = 0; i < plan->samples.size(); ++i) {
      json poses = json::array();
      for (const auto& p : plan->samples[i].poses) poses.push_back({p.x, p.y});
      samples.push_back({{"c_total", plan->costs[i].c_total},
                         {"pruned", static_cast<bool>(plan->pruned[i])},
                         {"chosen", plan->chosen && *plan->chosen == i},
                         {"poses", poses}});
    }
  }
  j["samples"] = samples;
  return j.dump() + "\n";
}

namespace {

void wait_unpaused(const StateServer& server) {
  while (server.paused() && !server.stopping()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

void spectate(StateServer& server, ActorCritic& model, const DemoConfig& cfg,
              std::ostream* log) {
  Env env(cfg.env);
  long decision = 0;
  for (int ep = 0; ep < cfg.episodes && !server.stopping(); ++ep) {
    env.reset(derive_seed(cfg.seed, 40, ep));
    Behavior current = Behavior::kKeep;
    std::optional<PlanStep> last_plan;
    PlannerHooks hooks;
    hooks.on_plan = [&](const WorldState&, const PlanStep& p) { last_plan = p; };
    hooks.on_step = [&](const WorldState& w) {
      wait_unpaused(server);
      if (!server.connected()) return;
      const Observation obs = env.observe();
      server.publish(snapshot_message(w, obs, decision, current,
                                      last_plan ? &*last_plan : nullptr, nullptr, false));
    };
    for (int k = 0; k < cfg.trainer.max_decisions && !env.world().status.terminal() &&
                    !server.stopping();
         ++k) {
      wait_unpaused(server);
      const Observation obs = env.observe();
      const auto dist =
          actor_forward(model.actor, obs.grid.cells, profile_input(obs.profile)).first;
      current = greedy_action(dist);
      if (server.connected()) {
        const auto costs = behavior_costs(env.world(), cfg.env.planner);
        server.publish(snapshot_message(env.world(), obs, decision, current, nullptr, &costs, false));
      }
      env.step(current, &hooks);
      if (log) *log << ep << ',' << decision << ",," << to_string(current) << '\n';
      ++decision;
    }
  }
}

void demonstrate(StateServer& server, ActorCritic& model, const DemoConfig& cfg,
                 std::ostream* log) {
  long decision = 0;
  const auto window = std::chrono::duration<double>(1.0 / cfg.pace_hz);
  const Expert human = [&](const Observation& obs, const WorldState& w) -> std::optional<Behavior> {
    const auto costs = behavior_costs(w, cfg.env.planner);
    // Wait for a listener, then open the decision window.
    while (!server.stopping() && (!server.connected() || server.paused())) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (server.stopping()) return std::nullopt;
    server.publish(snapshot_message(w, obs, decision, Behavior::kKeep, nullptr, &costs, true));
    std::this_thread::sleep_for(window);
    // The last command of the window wins; with none the decision waits.
    std::optional<Behavior> b = server.mailbox().take();
    while (!b && !server.stopping()) b = server.mailbox().wait_take(20);
    return b;
  };
  std::function<void(int, Behavior, bool)> record = [&](int ep, Behavior label, bool used) {
    if (log) *log << ep << ',' << decision << ',' << to_string(label) << ',' << (used ? "expert" : "learner") << '\n';
    ++decision;
  };
  TrainerConfig t = cfg.trainer;
  t.dagger.episodes = cfg.episodes;
  EnvConfig env = cfg.env;
  env.kind = WorldKind::kEvent;
  dagger_train(model, env, human, t, cfg.seed, nullptr, &record);
}

}  // namespace

void run_demo_session(StateServer& server, ActorCritic& model, const DemoConfig& cfg,
                      std::ostream* transition_log) {
  if (transition_log) *transition_log << "episode,decision,label,executed\n";
  if (cfg.mode == DemoMode::kSpectate) {
    spectate(server, model, cfg, transition_log);
  } else {
    demonstrate(server, model, cfg, transition_log);
  }
}

}  // namespace hbmp
