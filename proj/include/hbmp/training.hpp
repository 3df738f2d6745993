#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "hbmp/encoding.hpp"
#include "hbmp/motion.hpp"
#include "hbmp/policy.hpp"
#include "hbmp/reward.hpp"
#include "hbmp/sim.hpp"

namespace hbmp {

/// Deterministic seed derivation for episode streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

enum class WorldKind : std::uint8_t { kEvent, kDynamics };

struct EnvConfig {
  ScenarioConfig scenario;
  WorldKind kind = WorldKind::kDynamics;
  PlannerConfig planner;
  GridFrame frame = GridFrame::kLaneCurvilinear;
  double event_dt = 1.0;  // one behavior per step in the event world
};

struct StepResult {
  Behavior requested = Behavior::kKeep;
  Behavior resolved = Behavior::kKeep;
  double r_k = 0.0;
  double r_T = 0.0;
  bool done = false;
  double duration = 0.0;
  CostBreakdown cost;
  Outcome outcome = Outcome::kRunning;
};

/// One simulator plus the decision-level interface the learners use.
class Env {
 public:
  explicit Env(EnvConfig config);

  void reset(std::uint64_t seed);
  [[nodiscard]] Observation observe() const;
  StepResult step(Behavior requested, const PlannerHooks* hooks = nullptr);

  [[nodiscard]] WorldState& world() { return world_; }
  [[nodiscard]] const WorldState& world() const { return world_; }
  [[nodiscard]] const EnvConfig& config() const { return config_; }

 private:
  EnvConfig config_;
  std::shared_ptr<const RoadMap> map_;
  WorldState world_;
};

/// Route information the scripted expert may use beyond the observation.
struct ExpertContext {
  std::optional<Maneuver> next_maneuver;
};
ExpertContext expert_context(const WorldState& world);

/// Rule table standing in for a human demonstrator.
Behavior scripted_expert(const Observation& obs, const ExpertContext& ctx);

/// Behavior source consulted at each decision; nullopt means no label is
/// available (a human expert went away).
using Expert = std::function<std::optional<Behavior>(const Observation&, const WorldState&)>;
Expert make_scripted_expert();

struct DaggerConfig {
  int episodes = 2000;
  double alpha_start = 0.95;
  int anneal_start_ep = 1000;
  int anneal_end_ep = 1800;
  int round_episodes = 100;   // retrain on the aggregate after this many episodes
  int steps_per_round = 300;  // minibatch steps per retrain
  int batch = 32;
  double lr = 1e-3;
  int max_decisions = 200;
  int holdout_episodes = 100;
};

struct TrainerConfig {
  double gamma = 0.99;
  int batch = 32;
  double lr_actor = 1e-4;
  double lr_critic = 5e-4;
  double eps_clip = 0.2;
  double gae_lambda = 0.95;
  double entropy_coef = 0.01;
  int epochs_per_iter = 4;
  int episodes_total = 2000;
  int episodes_per_iter = 10;
  double max_grad_norm = 0.5;
  bool sparse_reward = false;
  int eval_interval = 100;
  int eval_episodes = 50;
  bool stop_at_threshold = true;
  double success_threshold = 0.8;
  int max_decisions = 400;
  DaggerConfig dagger;
};

double dagger_alpha(const DaggerConfig& cfg, int episode);

enum class ActionMode : std::uint8_t { kSample, kGreedy };

/// Overrides the actor at a decision when it returns a behavior.
using BehaviorOverride = std::function<std::optional<Behavior>(const Observation&, const WorldState&)>;

struct EpisodeResult {
  std::vector<Transition> transitions;
  Outcome outcome = Outcome::kRunning;
  double r_T = 0.0;
  double dense_return = 0.0;  // r_T + sum of r_k, undiscounted
  double sim_time = 0.0;
};

/// Plays one episode from `seed`. Transitions carry the observation at
/// decision time, the actor's log-probability and the critic's value.
/// With `sparse`, r_k is recorded as 0.
EpisodeResult run_episode(Env& env, const ActorCritic& model, ActionMode mode,
                          std::mt19937_64& rng, std::uint64_t seed, bool sparse = false,
                          const BehaviorOverride* forced = nullptr, int max_decisions = 400);

std::vector<Transition> collect_rollouts(const ActorCritic& model, const EnvConfig& env,
                                         int n_episodes, std::uint64_t seed, bool sparse = false);

struct Advantages {
  std::vector<double> adv;      // normalised
  std::vector<double> targets;  // value targets (unnormalised advantage + value)
};

/// GAE at behavior-index discounting over episodes laid end to end; an
/// episode ends at a transition with done set.
Advantages compute_advantages(const std::vector<Transition>& t, double gamma, double lambda,
                              bool normalise = true);

struct PpoStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  bool aborted = false;
  std::string message;
};

class PpoLearner {
 public:
  PpoLearner(ActorCritic& model, const TrainerConfig& cfg);
  PpoStats update(const std::vector<Transition>& batch, std::mt19937_64& rng);

 private:
  ActorCritic* model_;
  TrainerConfig cfg_;
  Adam actor_opt_, critic_opt_;
};

struct EvalResult {
  int episodes = 0;
  std::map<Outcome, int> counts;
  double success_rate = 0.0;
  double mean_return = 0.0;  // r_T + sum r_k
  double mean_r_T = 0.0;
  double mean_time = 0.0;
};

/// Greedy episodes on a fixed seed set; `forced` replaces the actor.
EvalResult evaluate(const ActorCritic& model, const EnvConfig& env, int episodes,
                    std::uint64_t seed, const BehaviorOverride* forced = nullptr,
                    int max_decisions = 400);

BehaviorOverride keep_only();

struct PpoRunResult {
  std::optional<int> episodes_to_threshold;
  EvalResult last_eval;
  EvalResult baseline;
  int episodes_run = 0;
  bool aborted = false;
};

/// PPO in `env` with periodic greedy evaluation against the keep-only
/// baseline. The threshold is success >= cfg.success_threshold and mean
/// return strictly above the baseline.
PpoRunResult run_ppo(ActorCritic& model, const EnvConfig& env, const TrainerConfig& cfg,
                     std::uint64_t seed, std::ostream* train_log = nullptr,
                     std::ostream* eval_log = nullptr);

struct DaggerSample {
  std::vector<std::uint8_t> grid;
  std::vector<double> profile;
  std::size_t label = 0;
};

struct DaggerResult {
  std::vector<double> round_loss;  // mean cross-entropy per retrain
  std::size_t dataset_size = 0;
  int episodes_run = 0;
  bool interrupted = false;  // the expert stopped answering
};

/// Imitation in `env` (normally the event world): the expert's label is
/// always recorded, the executed behavior is the expert's with probability
/// alpha(episode) and the learner's greedy choice otherwise.
DaggerResult dagger_train(ActorCritic& model, const EnvConfig& env, const Expert& expert,
                          const TrainerConfig& cfg, std::uint64_t seed,
                          std::ostream* log = nullptr,
                          const std::function<void(int, Behavior, bool)>* on_decision = nullptr);

/// Fraction of decisions where the learner's greedy behavior equals the
/// expert's label, over states the learner drives itself into.
double expert_agreement(const ActorCritic& model, const EnvConfig& env, const Expert& expert,
                        int episodes, std::uint64_t seed, int max_decisions = 200);

/// Outcome of comparing hierarchical search with coupled brute force.
struct EquivalenceReport {
  std::string scene;
  int horizon = 0;
  double hierarchical = 0.0;
  double coupled = 0.0;
  std::vector<Behavior> best_sequence;
  long sequences = 0;         // behavior sequences scored
  long coupled_sequences = 0; // (behavior, sample) sequences scored
  std::vector<std::pair<std::vector<Behavior>, double>> scored;  // every behavior sequence
  [[nodiscard]] bool equal() const { return hierarchical == coupled; }
};

/// Exhaustive check in the event world from the state in `world`.
EquivalenceReport hierarchical_equivalence_check(const WorldState& world, int horizon,
                                                 const PlannerConfig& planner, double gamma,
                                                 double event_dt = 1.0);

/// Tiny scenes used by the CLI and the acceptance suite.
std::vector<std::pair<std::string, WorldState>> equivalence_scenes();

/// Writes a transition buffer as CSV (grid as a 0/1 string).
void dump_transitions(std::ostream& out, const std::vector<Transition>& t);

}  // namespace hbmp
