#include "hbmp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "hbmp/maps.hpp"
#include "hbmp/path.hpp"
#include "json.hpp"

namespace hbmp {

const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::kKeep: return "keep";
    case Behavior::kChangeLeft: return "change_left";
    case Behavior::kChangeRight: return "change_right";
    case Behavior::kSpeedUp: return "speed_up";
    case Behavior::kSpeedDown: return "speed_down";
  }
  return "?";
}

std::optional<Behavior> behavior_from_string(const std::string& s) {
  for (Behavior b : kAllBehaviors) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

const char* to_string(AgentPolicy p) {
  switch (p) {
    case AgentPolicy::kConstantSpeedLaneFollow: return "constant_speed_lane_follow";
    case AgentPolicy::kSlowBlocker: return "slow_blocker";
    case AgentPolicy::kStopAtRed: return "stop_at_red";
  }
  return "?";
}

std::optional<AgentPolicy> agent_policy_from_string(const std::string& s) {
  for (auto p : {AgentPolicy::kConstantSpeedLaneFollow, AgentPolicy::kSlowBlocker,
                 AgentPolicy::kStopAtRed}) {
    if (s == to_string(p)) return p;
  }
  return std::nullopt;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "running";
    case Outcome::kGoalReached: return "goal_reached";
    case Outcome::kCollision: return "collision";
    case Outcome::kOvertime: return "overtime";
    case Outcome::kRedLightViolation: return "red_light_violation";
    case Outcome::kWrongLane: return "wrong_lane";
  }
  return "?";
}

std::optional<Maneuver> RouteProgress::next_maneuver() const {
  if (index + 1 >= groups.size()) return std::nullopt;
  return maneuvers[index + 1];
}

std::optional<LaneIndex> RouteProgress::next_on_route(const RoadMap& map, LaneIndex lane) const {
  if (index + 1 >= groups.size()) return std::nullopt;
  for (LaneIndex s : map.lane(lane).successors) {
    if (map.lane(s).group == groups[index + 1]) return s;
  }
  return std::nullopt;
}

RouteProgress make_progress(const RoadMap& map, Route route) {
  RouteProgress p;
  for (LaneIndex l : route.lanes) {
    const Lane& lane = map.lane(l);
    if (p.groups.empty() || p.groups.back() != lane.group) {
      p.groups.push_back(lane.group);
      p.maneuvers.push_back(lane.is_virtual ? lane.maneuver : std::nullopt);
    }
  }
  p.route = std::move(route);
  return p;
}

Pose2 integrate_unicycle(const Pose2& p, double v, double omega, double dt) {
  const double dpsi = omega * dt;
  Pose2 q;
  if (std::abs(dpsi) < 1e-9) {
    // Second-order expansion keeps the straight-line limit smooth.
    const double mid = p.psi + 0.5 * dpsi;
    q.x = p.x + v * dt * std::cos(mid);
    q.y = p.y + v * dt * std::sin(mid);
  } else {
    const double r = v / omega;
    q.x = p.x + r * (std::sin(p.psi + dpsi) - std::sin(p.psi));
    q.y = p.y - r * (std::cos(p.psi + dpsi) - std::cos(p.psi));
  }
  q.psi = wrap_angle(p.psi + dpsi);
  return q;
}

namespace {

void remember_previous(WorldState& w) {
  w.prev_lane = w.ego_lane;
  w.prev_s = w.ego_s;
  w.prev_time = w.time;
}

void set_agent_pose(const RoadMap& map, TrafficAgent& a) {
  const Polyline& c = map.lane(a.lane).centerline;
  const Vec2 p = c.point_at(a.s);
  a.state.x = p.x;
  a.state.y = p.y;
  a.state.psi = c.heading_at(a.s);
  a.state.omega = 0.0;
}

// Free distance to the nearest vehicle ahead on (lane, s) or its default
// successor, bumper to bumper. Vehicles more than `lateral` off the
// centreline are ignored.
double leader_gap(const WorldState& w, std::size_t self, LaneIndex lane, double s, double length) {
  constexpr double kLateral = 2.0;
  const RoadMap& map = w.road();
  double gap = std::numeric_limits<double>::infinity();
  auto consider = [&](const VehicleState& o) {
    const Vec2 p{o.x, o.y};
    const Lane& l = map.lane(lane);
    const auto pr = l.centerline.project(p);
    double ahead = -1.0;
    if (pr.distance < kLateral && pr.s > s && pr.s < l.length()) ahead = pr.s - s;
    if (ahead < 0.0) {
      if (const auto n = default_successor(map, lane)) {
        const auto pn = map.lane(*n).centerline.project(p);
        if (pn.distance < kLateral && pn.s > 0.0) ahead = l.length() - s + pn.s;
      }
    }
    if (ahead >= 0.0) gap = std::min(gap, ahead - 0.5 * (length + o.length));
  };
  for (std::size_t j = 0; j < w.agents.size(); ++j) {
    if (j != self) consider(w.agents[j].state);
  }
  consider(w.ego);
  return gap;
}

}  // namespace

void advance_agents(WorldState& w, double dt) {
  constexpr double kBrake = 6.0;
  constexpr double kHeadway = 1.2;
  constexpr double kStandstill = 2.0;
  const RoadMap& map = w.road();
  const double a_max = w.config.limits.a_max;
  std::vector<double> next_v(w.agents.size());
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    const TrafficAgent& a = w.agents[i];
    double target = a.cruise_speed;
    const double gap = leader_gap(w, i, a.lane, a.s, a.state.length);
    target = std::min(target, std::max(0.0, (gap - kStandstill) / kHeadway));
    if (a.policy == AgentPolicy::kStopAtRed) {
      if (const auto stop = map.stop_line(a.lane)) {
        const double dist = stop->s - a.s - 0.5 * a.state.length;
        const auto st = light_state(map.lights()[stop->light], w.time);
        const double v = a.state.v;
        if (st.color != LightColor::kGreen && dist > 0.0 && dist >= v * v / (2.0 * a_max) - 0.5) {
          target = std::min(target, std::sqrt(2.0 * a_max * std::max(0.0, dist - 0.5)));
        }
      }
    }
    next_v[i] = std::clamp(target, std::max(0.0, a.state.v - kBrake * dt), a.state.v + a_max * dt);
  }
  std::vector<TrafficAgent> kept;
  kept.reserve(w.agents.size());
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    TrafficAgent a = w.agents[i];
    a.state.v = next_v[i];
    const double end_before = map.lane(a.lane).length();
    auto [lane, s] = advance_along(map, a.lane, a.s, a.state.v * dt, nullptr);
    // Dead ends remove the agent once it has driven off the lane.
    if (lane == a.lane && s >= end_before && map.lane(lane).successors.empty()) continue;
    a.lane = lane;
    a.s = s;
    set_agent_pose(map, a);
    kept.push_back(a);
  }
  w.agents = std::move(kept);
}

SuccessorChooser route_successor(const WorldState& w) {
  return [&w](LaneIndex l) -> std::optional<LaneIndex> {
    if (auto n = w.progress.next_on_route(w.road(), l)) return n;
    return default_successor(w.road(), l);
  };
}

void track_ego(WorldState& w) {
  const RoadMap& map = w.road();
  const Vec2 p{w.ego.x, w.ego.y};
  auto proj = [&](LaneIndex l) { return map.lane(l).centerline.project(p); };

  LaneIndex cur = w.ego_lane;
  PolylineProjection pc = proj(cur);
  for (int guard = 0; guard < 8; ++guard) {
    const Lane& l = map.lane(cur);
    if (pc.s < l.length() - 1e-9 || l.successors.empty()) break;
    LaneIndex pick = w.progress.next_on_route(map, cur).value_or(
        default_successor(map, cur).value_or(l.successors.front()));
    PolylineProjection pp = proj(pick);
    for (LaneIndex s : l.successors) {
      const auto ps = proj(s);
      if (ps.distance < pp.distance - 0.5) {
        pick = s;
        pp = ps;
      }
    }
    cur = pick;
    pc = pp;
  }

  // Connectors leaving the same lane overlap at first; move to a sibling
  // once it is clearly closer.
  if (map.lane(cur).is_virtual) {
    for (LaneIndex pred : map.predecessors(cur)) {
      for (LaneIndex sib : map.lane(pred).successors) {
        if (sib == cur) continue;
        const auto ps = proj(sib);
        if (ps.distance < pc.distance - 0.25) {
          cur = sib;
          pc = ps;
        }
      }
    }
  }
  for (int guard = 0; guard < 4; ++guard) {
    const Lane& l = map.lane(cur);
    std::optional<LaneIndex> better;
    PolylineProjection pb = pc;
    for (auto n : {l.left, l.right}) {
      if (!n) continue;
      const auto pn = proj(*n);
      if (pn.distance < pb.distance) {
        better = n;
        pb = pn;
      }
    }
    if (!better) break;
    cur = *better;
    pc = pb;
  }
  w.ego_lane = cur;
  w.ego_s = pc.s;
  w.ego_e = pc.e;

  RouteProgress& rp = w.progress;
  if (rp.lost || rp.groups.empty()) return;
  const std::size_t g = map.lane(cur).group;
  if (rp.groups[rp.index] == g) return;
  if (rp.index + 1 < rp.groups.size() && rp.groups[rp.index + 1] == g) {
    ++rp.index;
    return;
  }
  try {
    Route r = plan_route(map, {cur, pc.s}, {rp.goal_lane(), rp.route.goal_s});
    rp = make_progress(map, std::move(r));
  } catch (const RouteError&) {
    rp.lost = true;
  }
}

void dyn_step(WorldState& w, double v_cmd, double omega_cmd) {
  if (w.status.terminal()) return;
  const double dt = w.config.dt;
  const VehicleLimits& lim = w.config.limits;
  remember_previous(w);
  const double lo = std::max(0.0, w.ego.v - lim.a_max * dt);
  const double hi = std::max(lo, std::min(w.v_max(), w.ego.v + lim.a_max * dt));
  const double v = std::clamp(v_cmd, lo, hi);
  const double omega = std::clamp(omega_cmd, -lim.omega_max, lim.omega_max);
  const Pose2 q = integrate_unicycle(w.ego.pose(), v, omega, dt);
  w.ego.x = q.x;
  w.ego.y = q.y;
  w.ego.psi = q.psi;
  w.ego.v = v;
  w.ego.omega = omega;
  advance_agents(w, dt);
  w.time += dt;
  track_ego(w);
  w.status = check_events(w);
}

double scaled_speed(Behavior b, double v, double speed_limit) {
  constexpr double kStep = 0.2;
  constexpr double kMin = 0.5;
  double out = v;
  if (b == Behavior::kSpeedUp) out = v * (1.0 + kStep);
  if (b == Behavior::kSpeedDown) out = v * (1.0 - kStep);
  return std::clamp(out, kMin, speed_limit);
}

void place_ego(WorldState& w, LaneIndex lane, double s, double v) {
  const Polyline& c = w.road().lane(lane).centerline;
  const Vec2 p = c.point_at(s);
  w.ego.x = p.x;
  w.ego.y = p.y;
  w.ego.psi = c.heading_at(s);
  w.ego.v = v;
  w.ego.omega = 0.0;
  w.ego_lane = lane;
  w.ego_s = s;
  w.ego_e = 0.0;
}

void event_step(WorldState& w, Behavior b) {
  if (w.status.terminal()) return;
  const double dt = w.config.dt;
  const RoadMap& map = w.road();
  remember_previous(w);
  const Lane& l = w.lane();
  std::optional<LaneIndex> target;
  if (b == Behavior::kChangeLeft) target = l.left;
  if (b == Behavior::kChangeRight) target = l.right;
  if (target) {
    const Vec2 p{w.ego.x, w.ego.y};
    const double s = map.lane(*target).centerline.project(p).s;
    place_ego(w, *target, s, w.ego.v);
  } else {
    double v = w.ego.v;
    if (b == Behavior::kSpeedUp || b == Behavior::kSpeedDown) v = scaled_speed(b, v, l.speed_limit);
    const auto [lane, s] = advance_along(map, w.ego_lane, w.ego_s, v * dt, route_successor(w));
    place_ego(w, lane, s, v);
  }
  advance_agents(w, dt);
  w.time += dt;
  track_ego(w);
  w.status = check_events(w);
}

namespace {

bool collided(const WorldState& w) {
  const Footprint f = w.ego.footprint();
  for (const auto& a : w.agents) {
    if (footprints_overlap(f, a.state.footprint())) return true;
  }
  for (const Vec2& c : f.corners()) {
    if (!w.road().drivable(c)) return true;
  }
  return false;
}

bool ran_red(const WorldState& w) {
  const RoadMap& map = w.road();
  if (w.time <= w.prev_time) return false;
  // Find the stop line crossed this step, as a fraction of the step.
  std::optional<std::pair<StopLine, double>> crossing;
  if (w.prev_lane == w.ego_lane) {
    if (const auto st = map.stop_line(w.ego_lane)) {
      if (w.prev_s < st->s && st->s <= w.ego_s) {
        crossing = {*st, (st->s - w.prev_s) / (w.ego_s - w.prev_s)};
      }
    }
  } else {
    const auto& succ = map.lane(w.prev_lane).successors;
    if (std::count(succ.begin(), succ.end(), w.ego_lane)) {
      if (const auto st = map.stop_line(w.prev_lane); st && w.prev_s < st->s) {
        const double total = map.lane(w.prev_lane).length() - w.prev_s + w.ego_s;
        crossing = {*st, total > 0.0 ? (st->s - w.prev_s) / total : 1.0};
      }
    } else if (const auto st = map.stop_line(w.ego_lane)) {
      // Lateral move: parallel lanes share arc length closely enough.
      if (w.prev_s < st->s && st->s <= w.ego_s) {
        crossing = {*st, (st->s - w.prev_s) / (w.ego_s - w.prev_s)};
      }
    }
  }
  if (!crossing) return false;
  const double t = w.prev_time + std::clamp(crossing->second, 0.0, 1.0) * (w.time - w.prev_time);
  return light_state(map.lights()[crossing->first.light], t).color == LightColor::kRed;
}

bool in_wrong_lane(const WorldState& w) {
  if (w.progress.lost) return true;
  const Lane& l = w.lane();
  if (l.is_virtual || l.successors.empty()) return false;
  const auto m = w.progress.next_maneuver();
  if (!m || allows(l.directions, *m)) return false;
  const auto stop = w.road().stop_line(w.ego_lane);
  const double end = stop ? stop->s : l.length();
  return end - w.ego_s <= w.config.commit_distance;
}

bool reached_goal(const WorldState& w) {
  const RouteProgress& rp = w.progress;
  if (rp.lost || rp.groups.empty() || rp.index + 1 != rp.groups.size()) return false;
  if (w.lane().group != rp.groups.back()) return false;
  const auto pr = w.road().lane(rp.goal_lane()).centerline.project({w.ego.x, w.ego.y});
  return pr.s >= rp.route.goal_s - w.config.goal_radius;
}

}  // namespace

EpisodeStatus check_events(const WorldState& w) {
  if (w.status.terminal()) return w.status;
  EpisodeStatus st{Outcome::kRunning, w.time};
  if (collided(w)) {
    st.outcome = Outcome::kCollision;
  } else if (ran_red(w)) {
    st.outcome = Outcome::kRedLightViolation;
  } else if (in_wrong_lane(w)) {
    st.outcome = Outcome::kWrongLane;
  } else if (w.time > w.time_budget) {
    st.outcome = Outcome::kOvertime;
  } else if (reached_goal(w)) {
    st.outcome = Outcome::kGoalReached;
  }
  return st;
}

void set_route(WorldState& w, Route route) {
  const double limit = w.lane().speed_limit;
  w.time_budget = w.config.time_budget > 0.0
                      ? w.config.time_budget
                      : std::max(30.0, 3.0 * route.cost / limit);
  w.progress = make_progress(w.road(), std::move(route));
}

std::shared_ptr<const RoadMap> resolve_map(const std::string& name_or_path) {
  try {
    return std::make_shared<const RoadMap>(load_map(maps::builtin(name_or_path)));
  } catch (const std::invalid_argument&) {
    return std::make_shared<const RoadMap>(load_map_file(name_or_path));
  }
}

ScenarioConfig load_scenario(const std::string& document) {
  using nlohmann::json;
  ScenarioConfig c;
  json j;
  try {
    j = json::parse(document);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  c.map = j.value("map", c.map);
  c.kind = j.value("kind", c.kind);
  if (c.kind != "empty" && c.kind != "slow_blocker" && c.kind != "traffic") {
    throw std::invalid_argument("scenario: unknown kind '" + c.kind + "'");
  }
  c.traffic_agents = j.value("traffic_agents", c.traffic_agents);
  c.seed = j.value("seed", c.seed);
  c.ego_speed_fraction = j.value("ego_speed_fraction", c.ego_speed_fraction);
  c.world.time_budget = j.value("time_budget", c.world.time_budget);
  if (j.contains("goal_cost")) {
    c.min_goal_cost = j["goal_cost"].at(0).get<double>();
    c.max_goal_cost = j["goal_cost"].at(1).get<double>();
  }
  for (const auto& ja : j.value("agents", json::array())) {
    AgentSpec a;
    a.lane = ja.at("lane").get<std::string>();
    a.s = ja.value("s", 0.0);
    a.speed = ja.value("speed", 0.0);
    const auto p = agent_policy_from_string(ja.value("policy", "constant_speed_lane_follow"));
    if (!p) throw std::invalid_argument("scenario: unknown agent policy");
    a.policy = *p;
    c.agents.push_back(a);
  }
  return c;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

namespace {

TrafficAgent make_agent(const RoadMap& map, LaneIndex lane, double s, double speed,
                        AgentPolicy policy) {
  TrafficAgent a;
  a.lane = lane;
  a.s = s;
  a.cruise_speed = speed;
  a.policy = policy;
  a.state.v = speed;
  set_agent_pose(map, a);
  return a;
}

bool overlaps_any(const WorldState& w, const VehicleState& v, double margin) {
  Footprint f = v.footprint();
  f.length += 2.0 * margin;
  f.width += 2.0 * margin;
  if (footprints_overlap(f, w.ego.footprint())) return true;
  for (const auto& a : w.agents) {
    if (footprints_overlap(f, a.state.footprint())) return true;
  }
  return false;
}

}  // namespace

WorldState spawn_episode(std::shared_ptr<const RoadMap> map, const ScenarioConfig& sc,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LaneIndex> real;
  for (LaneIndex i = 0; i < map->lanes().size(); ++i) {
    if (!map->lane(i).is_virtual && map->lane(i).length() >= 20.0) real.push_back(i);
  }
  if (real.empty()) throw SpawnError("map has no lane long enough to spawn on");
  std::uniform_int_distribution<std::size_t> pick(0, real.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int attempt = 0; attempt < 200; ++attempt) {
    WorldState w;
    w.map = map;
    w.config = sc.world;
    const LaneIndex lane = real[pick(rng)];
    const double len = map->lane(lane).length();
    const double s = 5.0 + unit(rng) * (len - 10.0);
    place_ego(w, lane, s, sc.ego_speed_fraction * map->lane(lane).speed_limit);
    const LaneIndex goal_lane = real[pick(rng)];
    const double goal_s = (0.2 + 0.6 * unit(rng)) * map->lane(goal_lane).length();
    Route route;
    try {
      route = plan_route(*map, {lane, s}, {goal_lane, goal_s});
    } catch (const RouteError&) {
      continue;
    }
    if (route.cost < sc.min_goal_cost || route.cost > sc.max_goal_cost) continue;
    set_route(w, std::move(route));
    w.prev_lane = lane;
    w.prev_s = s;

    bool ok = true;
    for (const AgentSpec& spec : sc.agents) {
      const LaneIndex al = map->index_of(spec.lane);
      w.agents.push_back(make_agent(*map, al, spec.s, spec.speed, spec.policy));
    }
    if (sc.kind == "slow_blocker") {
      const auto [bl, bs] = advance_along(*map, lane, s, 15.0, route_successor(w));
      w.agents.push_back(make_agent(*map, bl, bs, 0.3 * map->lane(bl).speed_limit,
                                    AgentPolicy::kSlowBlocker));
    } else if (sc.kind == "traffic") {
      const bool lights = !map->lights().empty();
      for (int k = 0, tries = 0; k < sc.traffic_agents && tries < 50 * sc.traffic_agents; ++tries) {
        const LaneIndex al = real[pick(rng)];
        const double as = unit(rng) * map->lane(al).length();
        const double speed = (0.5 + 0.4 * unit(rng)) * map->lane(al).speed_limit;
        const AgentPolicy pol = lights && unit(rng) < 0.5 ? AgentPolicy::kStopAtRed
                                                          : AgentPolicy::kConstantSpeedLaneFollow;
        TrafficAgent a = make_agent(*map, al, as, speed, pol);
        const Vec2 d{a.state.x - w.ego.x, a.state.y - w.ego.y};
        if (norm(d) < 15.0 || overlaps_any(w, a.state, 3.0)) continue;
        w.agents.push_back(a);
        ++k;
      }
    }
    for (std::size_t i = 0; i < w.agents.size() && ok; ++i) {
      if (footprints_overlap(w.agents[i].state.footprint(), w.ego.footprint())) ok = false;
    }
    if (!ok) continue;
    w.status = check_events(w);
    if (w.status.terminal()) continue;
    return w;
  }
  throw SpawnError("no valid spawn after 200 attempts");
}

TraceWriter::TraceWriter(std::ostream& out) : out_(&out) {
  *out_ << "t,x,y,psi,v,omega,behavior,outcome\n";
}

void TraceWriter::write(const WorldState& w, std::optional<Behavior> b) {
  *out_ << std::setprecision(10) << w.time << ',' << w.ego.x << ',' << w.ego.y << ','
        << w.ego.psi << ',' << w.ego.v << ',' << w.ego.omega << ','
        << (b ? to_string(*b) : "") << ',' << to_string(w.status.outcome) << '\n';
}

}  // namespace hbmp
