#include "hbmp/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "hbmp/maps.hpp"

namespace hbmp {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a mix of the three inputs
  std::uint64_t z = base ^ (stream * 0x9e3779b97f4a7c15ULL) ^ (index * 0xbf58476d1ce4e5b9ULL);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Env::Env(EnvConfig config) : config_(std::move(config)), map_(resolve_map(config_.scenario.map)) {}

void Env::reset(std::uint64_t seed) {
  world_ = spawn_episode(map_, config_.scenario, seed);
  if (config_.kind == WorldKind::kEvent) world_.config.dt = config_.event_dt;
}

Observation Env::observe() const {
  try {
    return hbmp::observe(world_, config_.frame, config_.planner.grid);
  } catch (const ProjectionError&) {
    return hbmp::observe(world_, GridFrame::kVehicleCentric, config_.planner.grid);
  }
}

StepResult Env::step(Behavior requested, const PlannerHooks* hooks) {
  StepResult r;
  r.requested = requested;
  if (config_.kind == WorldKind::kEvent) {
    r.resolved = resolve_behavior(requested, build_profile(world_));
    const double t0 = world_.time;
    event_step(world_, r.resolved);
    r.duration = world_.time - t0;
  } else {
    const ExecutedBehavior ex = execute_behavior(requested, world_, config_.planner, hooks);
    r.resolved = ex.resolved;
    r.cost = ex.cost;
    r.r_k = step_reward(ex.cost);
    r.duration = ex.duration;
  }
  r.outcome = world_.status.outcome;
  r.done = world_.status.terminal();
  if (r.done) r.r_T = terminal_reward(r.outcome);
  return r;
}

ExpertContext expert_context(const WorldState& w) { return {w.progress.next_maneuver()}; }

namespace {

std::size_t maneuver_bit(Maneuver m) {
  switch (m) {
    case Maneuver::kLeft:
      return 0;
    case Maneuver::kStraight:
      return 1;
    case Maneuver::kRight:
      return 2;
  }
  return 1;
}

bool permits(const std::array<double, 3>& bits, const ExpertContext& ctx) {
  if (!ctx.next_maneuver) return true;
  return bits[maneuver_bit(*ctx.next_maneuver)] > 0.5;
}

// Any agent cell in rows covering [lon0, lon1) and columns [c0, c1].
bool occupied(const OccupancyGrid& g, double lon0, double lon1, int c0, int c1) {
  const long r0 = std::max(0L, g.config.row_of(lon0));
  const long r1 = std::min(static_cast<long>(g.rows()) - 1, g.config.row_of(lon1 - 1e-9));
  for (long r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (g.agent_at(static_cast<int>(r), c)) return true;
    }
  }
  return false;
}

}  // namespace

Behavior scripted_expert(const Observation& obs, const ExpertContext& ctx) {
  const OccupancyGrid& g = obs.grid;
  const RoadProfile& p = obs.profile;
  const int cols = g.cols();
  const int mid = cols / 2;  // columns mid-2 .. mid+1 span the ego's own lane width
  // 12 m of clear road ahead of the front bumper
  const double front = 0.5 * VehicleState{}.length;
  const bool blocked = occupied(g, 0.0, front + 12.0, mid - 2, mid + 1);
  if (blocked) {
    const bool left_free = p.e_l > 0.5 && permits(p.alpha_l, ctx) &&
                           !occupied(g, -6.0, 15.0, cols - 4, cols - 1);
    const bool right_free = p.e_r > 0.5 && permits(p.alpha_r, ctx) &&
                            !occupied(g, -6.0, 15.0, 0, 3);
    if (left_free) return Behavior::kChangeLeft;
    if (right_free) return Behavior::kChangeRight;
    return Behavior::kSpeedDown;
  }
  if ((p.l_r > 0.5 || p.l_y > 0.5) && p.d_s < 0.25) return Behavior::kSpeedDown;
  if (p.delta_v < 0.8) return Behavior::kSpeedUp;
  if (!permits(p.alpha_c, ctx)) {
    if (p.e_l > 0.5 && permits(p.alpha_l, ctx)) return Behavior::kChangeLeft;
    if (p.e_r > 0.5 && permits(p.alpha_r, ctx)) return Behavior::kChangeRight;
  }
  return Behavior::kKeep;
}

Expert make_scripted_expert() {
  return [](const Observation& o, const WorldState& w) -> std::optional<Behavior> {
    return scripted_expert(o, expert_context(w));
  };
}

double dagger_alpha(const DaggerConfig& c, int ep) {
  if (ep < c.anneal_start_ep) return c.alpha_start;
  if (ep >= c.anneal_end_ep) return 0.0;
  const double f = static_cast<double>(ep - c.anneal_start_ep) / (c.anneal_end_ep - c.anneal_start_ep);
  return c.alpha_start * (1.0 - f);
}

EpisodeResult run_episode(Env& env, const ActorCritic& model, ActionMode mode,
                          std::mt19937_64& rng, std::uint64_t seed, bool sparse,
                          const BehaviorOverride* forced, int max_decisions) {
  EpisodeResult res;
  env.reset(seed);
  for (int k = 0; k < max_decisions && !env.world().status.terminal(); ++k) {
    const Observation obs = env.observe();
    Transition t;
    t.grid = obs.grid.cells;
    const std::vector<double> prof = profile_input(obs.profile);
    std::copy(prof.begin(), prof.end(), t.profile.begin());
    const auto [dist, cache] = actor_forward(model.actor, t.grid, prof);
    t.value = critic_forward(model.critic, t.grid, prof).first;
    std::optional<Behavior> b;
    if (forced && *forced) b = (*forced)(obs, env.world());
    if (!b) {
      b = mode == ActionMode::kGreedy ? greedy_action(dist) : sample_action(dist, rng).first;
    }
    t.behavior = *b;
    t.log_prob = std::log(dist.probs[index_of(*b)]);
    const StepResult s = env.step(*b);
    t.r_k = sparse ? 0.0 : s.r_k;
    t.r_T = s.r_T;
    t.done = s.done;
    t.duration = s.duration;
    res.dense_return += s.r_k + s.r_T;
    res.r_T += s.r_T;
    res.transitions.push_back(std::move(t));
  }
  if (!res.transitions.empty()) res.transitions.back().done = true;
  res.outcome = env.world().status.outcome;
  res.sim_time = env.world().time;
  return res;
}

std::vector<Transition> collect_rollouts(const ActorCritic& model, const EnvConfig& cfg,
                                         int n_episodes, std::uint64_t seed, bool sparse) {
  Env env(cfg);
  std::mt19937_64 rng(derive_seed(seed, 2, 0));
  std::vector<Transition> out;
  for (int i = 0; i < n_episodes; ++i) {
    auto ep = run_episode(env, model, ActionMode::kSample, rng, derive_seed(seed, 1, i), sparse);
    out.insert(out.end(), std::make_move_iterator(ep.transitions.begin()),
               std::make_move_iterator(ep.transitions.end()));
  }
  return out;
}

Advantages compute_advantages(const std::vector<Transition>& t, double gamma, double lambda,
                              bool normalise) {
  Advantages a;
  const std::size_t n = t.size();
  a.adv.assign(n, 0.0);
  a.targets.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const bool last = t[i].done || i + 1 == n;
    const double next_v = last ? 0.0 : t[i + 1].value;
    const double delta = t[i].learning_reward(gamma) + gamma * next_v - t[i].value;
    gae = delta + (last ? 0.0 : gamma * lambda * gae);
    a.adv[i] = gae;
    a.targets[i] = gae + t[i].value;
  }
  if (normalise && n > 1) {  // a single advantage keeps its raw value
    const double mean = std::accumulate(a.adv.begin(), a.adv.end(), 0.0) / n;
    double var = 0.0;
    for (double x : a.adv) var += (x - mean) * (x - mean);
    var /= n;
    const double sd = std::sqrt(var);
    for (double& x : a.adv) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
  }
  return a;
}

PpoLearner::PpoLearner(ActorCritic& model, const TrainerConfig& cfg)
    : model_(&model), cfg_(cfg), actor_opt_(cfg.lr_actor), critic_opt_(cfg.lr_critic) {}

PpoStats PpoLearner::update(const std::vector<Transition>& batch, std::mt19937_64& rng) {
  PpoStats st;
  if (batch.empty()) return st;
  const Advantages adv = compute_advantages(batch, cfg_.gamma, cfg_.gae_lambda, true);
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  long count = 0, clipped = 0;
  for (int epoch = 0; epoch < cfg_.epochs_per_iter; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < idx.size(); start += cfg_.batch) {
      const std::size_t end = std::min(idx.size(), start + cfg_.batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::vector<double> ga(model_->actor.param_count(), 0.0);
      std::vector<double> gc(model_->critic.param_count(), 0.0);
      double a_loss = 0.0, c_loss = 0.0, ent = 0.0;
      for (std::size_t j = start; j < end; ++j) {
        const Transition& t = batch[idx[j]];
        const std::vector<double> prof(t.profile.begin(), t.profile.end());
        const auto [dist, ac] = actor_forward(model_->actor, t.grid, prof);
        const std::size_t a = index_of(t.behavior);
        const double logp = std::log(dist.probs[a]);
        const double ratio = std::exp(logp - t.log_prob);
        const double A = adv.adv[idx[j]];
        const double lo = 1.0 - cfg_.eps_clip, hi = 1.0 + cfg_.eps_clip;
        const double unclipped = ratio * A;
        const double clip_term = std::clamp(ratio, lo, hi) * A;
        const double surrogate = std::min(unclipped, clip_term);
        double h = 0.0;
        for (double p : dist.probs) h -= p * std::log(std::max(p, 1e-300));
        a_loss += -(surrogate + cfg_.entropy_coef * h) * inv;
        ent += h * inv;
        // Gradient of the loss w.r.t. the logits.
        std::vector<double> dz(dist.probs.size(), 0.0);
        if (unclipped <= clip_term) {
          const auto g = log_prob_grad(dist, a);
          for (std::size_t i = 0; i < dz.size(); ++i) dz[i] -= A * ratio * g[i] * inv;
        } else {
          ++clipped;
        }
        ++count;
        for (std::size_t i = 0; i < dz.size(); ++i) {
          const double p = dist.probs[i];
          dz[i] += cfg_.entropy_coef * p * (std::log(std::max(p, 1e-300)) + h) * inv;
        }
        model_->actor.backward(ac, dz, ga);

        const auto [v, cc] = critic_forward(model_->critic, t.grid, prof);
        const double err = v - adv.targets[idx[j]];
        c_loss += 0.5 * err * err * inv;
        model_->critic.backward(cc, {err * inv}, gc);
      }
      if (!std::isfinite(a_loss) || !std::isfinite(c_loss)) {
        st.aborted = true;
        st.message = "non-finite loss; iteration aborted";
        return st;
      }
      clip_grad_norm(ga, cfg_.max_grad_norm);
      clip_grad_norm(gc, cfg_.max_grad_norm);
      actor_opt_.step(model_->actor, ga);
      critic_opt_.step(model_->critic, gc);
      st.actor_loss = a_loss;
      st.critic_loss = c_loss;
      st.entropy = ent;
    }
  }
  st.clip_fraction = count ? static_cast<double>(clipped) / count : 0.0;
  return st;
}

BehaviorOverride keep_only() {
  return [](const Observation&, const WorldState&) -> std::optional<Behavior> {
    return Behavior::kKeep;
  };
}

EvalResult evaluate(const ActorCritic& model, const EnvConfig& cfg, int episodes,
                    std::uint64_t seed, const BehaviorOverride* forced, int max_decisions) {
  Env env(cfg);
  std::mt19937_64 rng(derive_seed(seed, 4, 0));
  EvalResult r;
  r.episodes = episodes;
  for (int i = 0; i < episodes; ++i) {
    const auto ep = run_episode(env, model, ActionMode::kGreedy, rng, derive_seed(seed, 3, i),
                                false, forced, max_decisions);
    ++r.counts[ep.outcome];
    r.mean_return += ep.dense_return / episodes;
    r.mean_r_T += ep.r_T / episodes;
    r.mean_time += ep.sim_time / episodes;
  }
  r.success_rate = episodes ? static_cast<double>(r.counts[Outcome::kGoalReached]) / episodes : 0.0;
  return r;
}

PpoRunResult run_ppo(ActorCritic& model, const EnvConfig& env_cfg, const TrainerConfig& cfg,
                     std::uint64_t seed, std::ostream* train_log, std::ostream* eval_log) {
  PpoRunResult out;
  const BehaviorOverride keep = keep_only();
  out.baseline = evaluate(model, env_cfg, cfg.eval_episodes, seed, &keep, cfg.max_decisions);
  if (train_log) {
    *train_log << "iteration,episodes,mean_r_T,mean_return,actor_loss,critic_loss,entropy,alpha\n";
  }
  if (eval_log) {
    *eval_log << "episodes,success_rate,mean_return,mean_r_T,baseline_success,baseline_return,"
                 "threshold_met\n";
  }
  auto eval_now = [&](int episodes) {
    out.last_eval = evaluate(model, env_cfg, cfg.eval_episodes, seed, nullptr, cfg.max_decisions);
    const bool met = out.last_eval.success_rate >= cfg.success_threshold &&
                     out.last_eval.mean_return > out.baseline.mean_return;
    if (eval_log) {
      *eval_log << episodes << ',' << out.last_eval.success_rate << ','
                << out.last_eval.mean_return << ',' << out.last_eval.mean_r_T << ','
                << out.baseline.success_rate << ',' << out.baseline.mean_return << ','
                << (met ? 1 : 0) << std::endl;
    }
    if (met && !out.episodes_to_threshold) out.episodes_to_threshold = episodes;
    return met;
  };

  Env env(env_cfg);
  PpoLearner learner(model, cfg);
  std::mt19937_64 act_rng(derive_seed(seed, 2, 0));
  std::mt19937_64 upd_rng(derive_seed(seed, 5, 0));
  if (cfg.eval_interval > 0 && eval_now(0) && cfg.stop_at_threshold) return out;
  int episodes = 0, iteration = 0, next_eval = cfg.eval_interval;
  while (episodes < cfg.episodes_total) {
    std::vector<Transition> batch;
    double sum_rT = 0.0, sum_ret = 0.0;
    const int n = std::min(cfg.episodes_per_iter, cfg.episodes_total - episodes);
    for (int i = 0; i < n; ++i) {
      auto ep = run_episode(env, model, ActionMode::kSample, act_rng,
                            derive_seed(seed, 1, episodes + i), cfg.sparse_reward, nullptr,
                            cfg.max_decisions);
      sum_rT += ep.r_T;
      sum_ret += ep.dense_return;
      batch.insert(batch.end(), std::make_move_iterator(ep.transitions.begin()),
                   std::make_move_iterator(ep.transitions.end()));
    }
    episodes += n;
    const PpoStats st = learner.update(batch, upd_rng);
    if (train_log) {
      *train_log << iteration << ',' << episodes << ',' << sum_rT / n << ',' << sum_ret / n << ','
                 << st.actor_loss << ',' << st.critic_loss << ',' << st.entropy << ",0" << std::endl;
    }
    ++iteration;
    if (st.aborted) {
      out.aborted = true;
      break;
    }
    if (cfg.eval_interval > 0 && episodes >= next_eval) {
      next_eval += cfg.eval_interval;
      if (eval_now(episodes) && cfg.stop_at_threshold) break;
    }
  }
  out.episodes_run = episodes;
  return out;
}

namespace {

DaggerSample sample_of(const Observation& obs, std::size_t label) {
  return {obs.grid.cells, profile_input(obs.profile), label};
}

double imitation_round(Network& actor, Adam& opt, const std::vector<DaggerSample>& data,
                       const DaggerConfig& cfg, std::mt19937_64& rng) {
  if (data.empty()) return 0.0;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  double total = 0.0;
  for (int step = 0; step < cfg.steps_per_round; ++step) {
    std::vector<double> g(actor.param_count(), 0.0);
    double loss = 0.0;
    for (int j = 0; j < cfg.batch; ++j) {
      const DaggerSample& s = data[pick(rng)];
      const auto [dist, cache] = actor_forward(actor, s.grid, s.profile);
      loss -= std::log(std::max(dist.probs[s.label], 1e-300)) / cfg.batch;
      auto dz = log_prob_grad(dist, s.label);
      for (double& x : dz) x = -x / cfg.batch;
      actor.backward(cache, dz, g);
    }
    opt.step(actor, g);
    total += loss;
  }
  return total / cfg.steps_per_round;
}

}  // namespace

DaggerResult dagger_train(ActorCritic& model, const EnvConfig& env_cfg, const Expert& expert,
                          const TrainerConfig& cfg, std::uint64_t seed, std::ostream* log,
                          const std::function<void(int, Behavior, bool)>* on_decision) {
  const DaggerConfig& d = cfg.dagger;
  DaggerResult res;
  Env env(env_cfg);
  Adam opt(d.lr);
  std::mt19937_64 mix_rng(derive_seed(seed, 11, 0));
  std::mt19937_64 train_rng(derive_seed(seed, 12, 0));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<DaggerSample> data;
  if (log) *log << "iteration,episodes,mean_r_T,mean_return,actor_loss,critic_loss,entropy,alpha\n";
  double round_rT = 0.0;
  int round_n = 0, round = 0;
  for (int ep = 0; ep < d.episodes; ++ep) {
    const double alpha = dagger_alpha(d, ep);
    env.reset(derive_seed(seed, 10, ep));
    for (int k = 0; k < d.max_decisions && !env.world().status.terminal(); ++k) {
      const Observation obs = env.observe();
      const std::optional<Behavior> label = expert(obs, env.world());
      if (!label) {
        res.interrupted = true;
        res.dataset_size = data.size();
        res.episodes_run = ep;
        return res;
      }
      const std::vector<double> prof = profile_input(obs.profile);
      const Behavior mine = greedy_action(actor_forward(model.actor, obs.grid.cells, prof).first);
      const bool use_expert = coin(mix_rng) < alpha;
      data.push_back(sample_of(obs, index_of(*label)));
      if (on_decision) (*on_decision)(ep, *label, use_expert);
      const StepResult s = env.step(use_expert ? *label : mine);
      round_rT += s.r_T;
    }
    ++round_n;
    const bool round_end = (ep + 1) % d.round_episodes == 0 || ep + 1 == d.episodes;
    if (round_end) {
      const double loss = imitation_round(model.actor, opt, data, d, train_rng);
      res.round_loss.push_back(loss);
      if (log) {
        *log << round << ',' << ep + 1 << ',' << round_rT / round_n << ',' << round_rT / round_n
             << ',' << loss << ",0,0," << alpha << '\n';
      }
      ++round;
      round_rT = 0.0;
      round_n = 0;
    }
  }
  res.dataset_size = data.size();
  res.episodes_run = d.episodes;
  return res;
}

double expert_agreement(const ActorCritic& model, const EnvConfig& env_cfg, const Expert& expert,
                        int episodes, std::uint64_t seed, int max_decisions) {
  Env env(env_cfg);
  long agree = 0, total = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(derive_seed(seed, 20, ep));
    for (int k = 0; k < max_decisions && !env.world().status.terminal(); ++k) {
      const Observation obs = env.observe();
      const auto label = expert(obs, env.world());
      if (!label) break;
      const Behavior mine =
          greedy_action(actor_forward(model.actor, obs.grid.cells, profile_input(obs.profile)).first);
      agree += mine == *label ? 1 : 0;
      ++total;
      env.step(mine);
    }
  }
  return total ? static_cast<double>(agree) / total : 0.0;
}

namespace {

// Planner outcome of one behavior from one event-world state.
struct Edge {
  std::vector<double> rewards;  // lambda of every feasible sample cost
  double chosen_reward = 0.0;   // lambda of the planner's pick
  bool terminal = false;
  double r_T = 0.0;
  int child = -1;
};

struct Tree {
  std::vector<std::array<Edge, kBehaviorCount>> nodes;
};

int expand(Tree& tree, const WorldState& w, int depth, int horizon, const PlannerConfig& planner) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (depth == horizon) return id;
  for (Behavior b : kAllBehaviors) {
    Edge e;
    const Behavior resolved = resolve_behavior(b, build_profile(w));
    const LaneIndex target = target_lane(w, resolved).value_or(w.ego_lane);
    const ReferencePath ref = reference_path(w, target);
    const double v_ref = reference_velocity(resolved, w.ego.v, w.speed_limit(),
                                            w.config.limits.a_max, w.config.dt, planner.horizon)
                             .v_ref;
    const PlanStep step = plan_once(w, resolved, ref, v_ref, planner);
    for (std::size_t i = 0; i < step.costs.size(); ++i) {
      if (!step.pruned[i]) e.rewards.push_back(step_reward(step.costs[i]));
    }
    if (step.chosen) {
      e.chosen_reward = step_reward(step.costs[*step.chosen]);
    } else {
      e.chosen_reward = step_reward(emergency_stop(w, ref, planner).second);
      e.rewards = {e.chosen_reward};
    }
    WorldState next = w;
    event_step(next, resolved);
    e.terminal = next.status.terminal();
    if (e.terminal) {
      e.r_T = terminal_reward(next.status.outcome);
    }
    tree.nodes[id][index_of(b)] = e;
    if (!e.terminal) {
      const int child = expand(tree, next, depth + 1, horizon, planner);
      tree.nodes[id][index_of(b)].child = child;
    }
  }
  return id;
}

// Scores one path: sum_k gamma^k r_k, plus gamma^(k+1) r_T at a terminal step.
double score(const std::vector<double>& r, double r_T, bool terminal, double gamma) {
  double g = 0.0, disc = 1.0;
  for (double x : r) {
    g += disc * x;
    disc *= gamma;
  }
  if (terminal) g += disc * r_T;
  return g;
}

}  // namespace

EquivalenceReport hierarchical_equivalence_check(const WorldState& start, int horizon,
                                                 const PlannerConfig& planner, double gamma,
                                                 double event_dt) {
  WorldState w = start;
  w.config.dt = event_dt;
  Tree tree;
  expand(tree, w, 0, horizon, planner);

  EquivalenceReport rep;
  rep.horizon = horizon;
  rep.hierarchical = -std::numeric_limits<double>::infinity();
  rep.coupled = -std::numeric_limits<double>::infinity();

  // Hierarchical: every behavior sequence, each interval scored by the
  // planner's own pick.
  std::vector<Behavior> seq;
  std::vector<double> rs;
  std::function<void(int, int)> hier = [&](int node, int depth) {
    for (Behavior b : kAllBehaviors) {
      const Edge& e = tree.nodes[node][index_of(b)];
      seq.push_back(b);
      rs.push_back(e.chosen_reward);
      if (e.terminal || depth + 1 == horizon) {
        const double v = score(rs, e.r_T, e.terminal, gamma);
        ++rep.sequences;
        rep.scored.emplace_back(seq, v);
        if (v > rep.hierarchical) {
          rep.hierarchical = v;
          rep.best_sequence = seq;
        }
      } else {
        hier(e.child, depth + 1);
      }
      seq.pop_back();
      rs.pop_back();
    }
  };
  // Coupled: every (behavior, sample) sequence.
  std::function<void(int, int)> coupled = [&](int node, int depth) {
    for (Behavior b : kAllBehaviors) {
      const Edge& e = tree.nodes[node][index_of(b)];
      for (double r : e.rewards) {
        rs.push_back(r);
        if (e.terminal || depth + 1 == horizon) {
          rep.coupled = std::max(rep.coupled, score(rs, e.r_T, e.terminal, gamma));
          ++rep.coupled_sequences;
        } else {
          coupled(e.child, depth + 1);
        }
        rs.pop_back();
      }
    }
  };
  if (horizon > 0) {
    hier(0, 0);
    coupled(0, 0);
  } else {
    rep.hierarchical = rep.coupled = 0.0;
  }
  return rep;
}

std::vector<std::pair<std::string, WorldState>> equivalence_scenes() {
  auto make = [](int lanes, double v, double goal_s) {
    WorldState w;
    w.map = std::make_shared<const RoadMap>(load_map(maps::straight_road(lanes, 300.0)));
    w.config.time_budget = 1000.0;
    place_ego(w, 0, 20.0, v);
    set_route(w, plan_route(*w.map, {0, 20.0}, {0, goal_s}));
    w.prev_lane = 0;
    w.prev_s = 20.0;
    return w;
  };
  auto park = [](WorldState& w, LaneIndex lane, double s, double speed) {
    TrafficAgent a;
    a.lane = lane;
    a.s = s;
    a.cruise_speed = speed;
    a.state.v = speed;
    const Polyline& c = w.road().lane(lane).centerline;
    const Vec2 p = c.point_at(s);
    a.state.x = p.x;
    a.state.y = p.y;
    a.state.psi = c.heading_at(s);
    w.agents.push_back(a);
  };
  std::vector<std::pair<std::string, WorldState>> out;
  out.emplace_back("single_lane_free", make(1, 5.0, 280.0));
  WorldState blocker = make(2, 8.0, 280.0);
  park(blocker, 0, 34.0, 3.0);
  out.emplace_back("two_lane_blocker", blocker);
  out.emplace_back("single_lane_at_limit", make(1, 10.0, 280.0));
  WorldState near_goal = make(2, 8.0, 40.0);
  park(near_goal, 1, 30.0, 2.0);
  out.emplace_back("two_lane_goal_ahead", near_goal);
  return out;
}

void dump_transitions(std::ostream& out, const std::vector<Transition>& t) {
  out << "index,behavior,r_k,r_T,done,duration,log_prob,value";
  for (const char* n : RoadProfile::names()) out << ',' << n;
  out << ",grid\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Transition& x = t[i];
    out << i << ',' << to_string(x.behavior) << ',' << x.r_k << ',' << x.r_T << ','
        << (x.done ? 1 : 0) << ',' << x.duration << ',' << x.log_prob << ',' << x.value;
    for (double p : x.profile) out << ',' << p;
    out << ',';
    for (auto c : x.grid) out << static_cast<int>(c);
    out << '\n';
  }
}

}  // namespace hbmp
