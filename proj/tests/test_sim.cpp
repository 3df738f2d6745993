#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hbmp/maps.hpp"
#include "hbmp/sim.hpp"

using namespace hbmp;

namespace {

// Ego on (lane, s) with a same-lane goal far ahead and a generous budget.
WorldState world_on(std::shared_ptr<const RoadMap> map, LaneIndex lane, double s, double v,
                    double goal_s) {
  WorldState w;
  w.map = std::move(map);
  w.config.time_budget = 1000.0;
  place_ego(w, lane, s, v);
  set_route(w, plan_route(*w.map, {lane, s}, {lane, goal_s}));
  w.prev_lane = lane;
  w.prev_s = s;
  return w;
}

std::shared_ptr<const RoadMap> light_road(double stop_s) {
  const std::string doc = R"({
    "lanes": [{"id": "a", "centerline": [[0, 0], [100, 0]], "width": 3.5,
               "speed_limit": 10, "directions": ["straight"], "successors": []}],
    "lights": [{"id": "L", "lanes": ["a"], "stop_line_s": [)" +
                          std::to_string(stop_s) + R"(], "offset": 0,
                "phases": [{"color": "green", "duration": 10}, {"color": "red", "duration": 10}]}],
    "intersections": []
  })";
  return std::make_shared<const RoadMap>(load_map(doc));
}

}  // namespace

TEST(DynStep, StraightLine) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(1, 200.0)));
  WorldState w = world_on(map, 0, 50.0, 1.0, 150.0);
  dyn_step(w, 1.0, 0.0);
  EXPECT_NEAR(w.ego.x, 50.1, 1e-12);
  EXPECT_NEAR(w.ego.y, 0.0, 1e-12);
  EXPECT_NEAR(w.ego.psi, 0.0, 1e-12);
  EXPECT_NEAR(w.time, 0.1, 1e-12);
}

TEST(DynStep, RotatesInPlace) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(1, 200.0)));
  WorldState w = world_on(map, 0, 50.0, 0.0, 150.0);
  dyn_step(w, 0.0, 1.0);
  EXPECT_NEAR(w.ego.x, 50.0, 1e-12);
  EXPECT_NEAR(w.ego.psi, 0.1, 1e-12);
}

TEST(DynStep, FullCircleMatchesClosedFormTwist) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(3, 200.0)));
  WorldState w = world_on(map, 1, 100.0, std::numbers::pi, 190.0);
  w.config.limits.omega_max = 4.0;
  const double x0 = w.ego.x, y0 = w.ego.y;
  const double v = std::numbers::pi, om = std::numbers::pi;
  for (int k = 1; k <= 20; ++k) {
    dyn_step(w, v, om);
    ASSERT_EQ(w.status.outcome, Outcome::kRunning) << "step " << k;
    const double t = 0.1 * k;
    // Circle of radius v/om = 1 centred one metre to the left of the start.
    const double cx = x0, cy = y0 + 1.0;
    EXPECT_NEAR(w.ego.x, cx + std::sin(om * t), 1e-2);
    EXPECT_NEAR(w.ego.y, cy - std::cos(om * t), 1e-2);
    EXPECT_GT(w.ego.psi, -std::numbers::pi);
    EXPECT_LE(w.ego.psi, std::numbers::pi);
  }
  EXPECT_NEAR(w.ego.x, x0, 1e-9);
  EXPECT_NEAR(w.ego.y, y0, 1e-9);
}

TEST(DynStep, ClampsAccelerationTurnRateAndSpeed) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(1, 200.0)));
  WorldState w = world_on(map, 0, 10.0, 5.0, 190.0);
  dyn_step(w, 100.0, 10.0);
  EXPECT_NEAR(w.ego.v, 5.3, 1e-12);
  EXPECT_NEAR(w.ego.omega, 1.5, 1e-12);
  WorldState b = world_on(map, 0, 10.0, 5.0, 190.0);
  dyn_step(b, -3.0, 0.0);
  EXPECT_NEAR(b.ego.v, 4.7, 1e-12);
  WorldState c = world_on(map, 0, 10.0, 10.9, 190.0);
  for (int i = 0; i < 5; ++i) dyn_step(c, 50.0, 0.0);
  EXPECT_NEAR(c.ego.v, 11.0, 1e-12);
}

TEST(DynStep, ConstantCommandConservesSpeed) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::two_lane_loop()));
  WorldState w = world_on(map, map->index_of("in_s"), 10.0, 4.0, 90.0);
  for (int i = 0; i < 50; ++i) {
    dyn_step(w, 4.0, 0.0);
    EXPECT_DOUBLE_EQ(w.ego.v, 4.0);
  }
}

TEST(DynStep, IdenticalCommandsGiveBitIdenticalTrajectories) {
  auto map = resolve_map("town");
  ScenarioConfig sc;
  sc.kind = "traffic";
  sc.traffic_agents = 6;
  WorldState a = spawn_episode(map, sc, 5);
  WorldState b = spawn_episode(map, sc, 5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double v = 4.0 + u(rng), om = 0.1 * u(rng);
    dyn_step(a, v, om);
    dyn_step(b, v, om);
    ASSERT_EQ(a.ego.x, b.ego.x);
    ASSERT_EQ(a.ego.y, b.ego.y);
    ASSERT_EQ(a.ego.psi, b.ego.psi);
    ASSERT_EQ(a.agents.size(), b.agents.size());
    for (std::size_t k = 0; k < a.agents.size(); ++k) ASSERT_EQ(a.agents[k].s, b.agents[k].s);
  }
}

TEST(CheckEvents, OverlappingRectanglesCollide) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(2, 200.0)));
  WorldState w = world_on(map, 0, 50.0, 0.0, 150.0);
  TrafficAgent a;
  a.lane = 0;
  a.s = 53.0;
  a.state.x = 53.0;
  w.agents.push_back(a);
  EXPECT_EQ(check_events(w).outcome, Outcome::kCollision);
  w.agents[0].state.x = 54.6;
  EXPECT_EQ(check_events(w).outcome, Outcome::kRunning);
}

TEST(CheckEvents, LeavingTheRoadIsACollision) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(1, 200.0)));
  WorldState w = world_on(map, 0, 50.0, 0.0, 150.0);
  w.ego.y = 0.8;
  EXPECT_EQ(check_events(w).outcome, Outcome::kRunning);
  w.ego.y = 0.9;
  EXPECT_EQ(check_events(w).outcome, Outcome::kCollision);
}

TEST(CheckEvents, CrossingStopLineOnRed) {
  auto map = light_road(50.0);
  WorldState w = world_on(map, 0, 49.9, 2.0, 90.0);
  w.time = 12.0;
  dyn_step(w, 2.0, 0.0);
  EXPECT_NEAR(w.ego_s, 50.1, 1e-9);
  EXPECT_EQ(w.status.outcome, Outcome::kRedLightViolation);
}

TEST(CheckEvents, LightTurningRedAfterCrossingIsFine) {
  auto map = light_road(50.0);
  WorldState w = world_on(map, 0, 49.9, 2.0, 90.0);
  w.time = 9.9;  // crossing at t = 9.95, still green
  for (int i = 0; i < 5; ++i) dyn_step(w, 2.0, 0.0);
  EXPECT_GT(w.time, 10.0);
  EXPECT_EQ(w.status.outcome, Outcome::kRunning);
}

// Oracle: march the same straight-line motion in 1000 substeps per step and
// read the light at the first substep past the line.
TEST(CheckEvents, RedLightMatchesFineTraceOracle) {
  auto map = light_road(50.0);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> t0(0.0, 40.0), v0(0.5, 9.0);
  int violations = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const double start_t = t0(rng), v = v0(rng);
    const double start_s = 50.0 - v * 0.1 * 3.5;
    WorldState w = world_on(map, 0, start_s, v, 90.0);
    w.time = start_t;
    bool oracle_red = false;
    for (int step = 0; step < 6; ++step) {
      for (int k = 1; k <= 1000; ++k) {
        const double s_prev = start_s + v * (0.1 * step + 1e-4 * (k - 1));
        const double s_now = start_s + v * (0.1 * step + 1e-4 * k);
        if (s_prev < 50.0 && s_now >= 50.0) {
          const double t = start_t + 0.1 * step + 1e-4 * k;
          oracle_red = light_state(map->lights()[0], t).color == LightColor::kRed;
        }
      }
    }
    for (int step = 0; step < 6; ++step) dyn_step(w, v, 0.0);
    const bool red = w.status.outcome == Outcome::kRedLightViolation;
    // The oracle's 1e-4 s resolution can only disagree right at a phase edge.
    const double cross_t = start_t + (50.0 - start_s) / v;
    const double phase = std::fmod(cross_t, 20.0);
    if (std::abs(phase - 10.0) < 1e-3 || phase < 1e-3 || phase > 20.0 - 1e-3) continue;
    EXPECT_EQ(red, oracle_red) << "t0=" << start_t << " v=" << v;
    violations += red;
  }
  EXPECT_GT(violations, 50);
}

TEST(CheckEvents, PriorityCollisionBeatsRedLight) {
  auto map = light_road(50.0);
  WorldState w = world_on(map, 0, 49.9, 2.0, 90.0);
  w.time = 12.0;
  TrafficAgent a;
  a.state.x = 54.0;
  w.agents.push_back(a);
  w.agents[0].cruise_speed = 0.0;
  w.agents[0].s = 54.0;
  dyn_step(w, 2.0, 0.0);
  EXPECT_EQ(w.status.outcome, Outcome::kCollision);
}

TEST(CheckEvents, OvertimeAndAbsorbingTerminal) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(1, 200.0)));
  WorldState w = world_on(map, 0, 10.0, 1.0, 190.0);
  w.time_budget = 0.25;
  for (int i = 0; i < 3; ++i) dyn_step(w, 1.0, 0.0);
  EXPECT_EQ(w.status.outcome, Outcome::kOvertime);
  const double x = w.ego.x;
  dyn_step(w, 1.0, 0.0);
  EXPECT_EQ(w.ego.x, x);
  EXPECT_EQ(check_events(w).outcome, Outcome::kOvertime);
}

TEST(CheckEvents, GoalReachedWithinRadius) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(2, 200.0)));
  WorldState w = world_on(map, 0, 10.0, 0.0, 100.0);
  place_ego(w, 0, 96.0, 0.0);
  EXPECT_EQ(check_events(w).outcome, Outcome::kRunning);
  place_ego(w, 0, 97.5, 0.0);
  EXPECT_EQ(check_events(w).outcome, Outcome::kGoalReached);
  // Lane-agnostic: the neighbour lane at the same station also counts.
  place_ego(w, 1, 98.0, 0.0);
  EXPECT_EQ(check_events(w).outcome, Outcome::kGoalReached);
}

TEST(CheckEvents, WrongLaneInsideCommitmentDistance) {
  auto map = resolve_map("town");
  // A lane whose directions lack left while its inner neighbour turns left.
  std::optional<LaneIndex> lane;
  LaneIndex connector = 0;
  for (LaneIndex i = 0; i < map->lanes().size() && !lane; ++i) {
    const Lane& l = map->lane(i);
    if (l.is_virtual || allows(l.directions, Maneuver::kLeft) || !l.left) continue;
    for (LaneIndex c : map->lane(*l.left).successors) {
      if (map->lane(c).maneuver == Maneuver::kLeft) {
        lane = i;
        connector = c;
      }
    }
  }
  ASSERT_TRUE(lane);
  const LaneIndex exit = map->lane(connector).successors.front();
  const double len = map->lane(*lane).length();
  WorldState w;
  w.map = map;
  w.config.time_budget = 1000.0;
  place_ego(w, *lane, len - 25.0, 0.0);
  set_route(w, plan_route(*map, {*lane, len - 25.0}, {exit, 20.0}));
  ASSERT_EQ(w.progress.next_maneuver(), Maneuver::kLeft);
  EXPECT_EQ(check_events(w).outcome, Outcome::kRunning);
  place_ego(w, *lane, len - 15.0, 0.0);
  EXPECT_EQ(check_events(w).outcome, Outcome::kWrongLane);
  place_ego(w, *map->lane(*lane).left, len - 15.0, 0.0);
  EXPECT_EQ(check_events(w).outcome, Outcome::kRunning);
}

TEST(EventStep, ChangeLeftPreservesStation) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(2, 200.0, 15.0)));
  WorldState w = world_on(map, 0, 30.0, 10.0, 150.0);
  event_step(w, Behavior::kChangeLeft);
  EXPECT_EQ(w.ego_lane, map->index_of("r1"));
  EXPECT_NEAR(w.ego_s, 30.0, 1e-9);
  EXPECT_NEAR(w.time, 0.1, 1e-12);
}

TEST(EventStep, ChangeWithoutNeighbourActsAsKeep) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(2, 200.0, 15.0)));
  WorldState w = world_on(map, 1, 30.0, 10.0, 150.0);
  event_step(w, Behavior::kChangeLeft);
  EXPECT_EQ(w.ego_lane, 1u);
  EXPECT_NEAR(w.ego_s, 31.0, 1e-9);
}

TEST(EventStep, SpeedUpByTwentyPercent) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(2, 200.0, 15.0)));
  WorldState w = world_on(map, 0, 30.0, 10.0, 150.0);
  event_step(w, Behavior::kSpeedUp);
  EXPECT_NEAR(w.ego.v, 12.0, 1e-12);
  EXPECT_NEAR(w.ego_s, 31.2, 1e-9);
  event_step(w, Behavior::kSpeedUp);
  EXPECT_NEAR(w.ego.v, 14.4, 1e-12);
  event_step(w, Behavior::kSpeedUp);
  EXPECT_NEAR(w.ego.v, 15.0, 1e-12);
  EXPECT_NEAR(scaled_speed(Behavior::kSpeedDown, 0.4, 10.0), 0.5, 1e-12);
  EXPECT_NEAR(scaled_speed(Behavior::kSpeedDown, 10.0, 10.0), 8.0, 1e-12);
}

TEST(EventStep, KeepOnlyNeverChangesLaneAndFollowsRoute) {
  maps::TownOptions o;
  o.lights = false;
  auto map = std::make_shared<const RoadMap>(load_map(maps::town(o)));
  ScenarioConfig sc;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    WorldState w = spawn_episode(map, sc, seed);
    for (int i = 0; i < 3000 && !w.status.terminal(); ++i) {
      const LaneIndex before = w.ego_lane;
      event_step(w, Behavior::kKeep);
      if (w.ego_lane != before) {
        // Only longitudinal moves: into a successor, never a neighbour.
        const auto& succ = map->lane(before).successors;
        EXPECT_TRUE(std::count(succ.begin(), succ.end(), w.ego_lane));
      }
    }
    // One lane per direction: keep follows the route to the goal.
    EXPECT_EQ(w.status.outcome, Outcome::kGoalReached) << "seed " << seed;
  }
}

TEST(Spawn, SameSeedSameEpisode) {
  auto map = resolve_map("town");
  ScenarioConfig sc;
  sc.kind = "traffic";
  sc.traffic_agents = 5;
  const WorldState a = spawn_episode(map, sc, 42);
  const WorldState b = spawn_episode(map, sc, 42);
  EXPECT_EQ(a.ego.x, b.ego.x);
  EXPECT_EQ(a.ego.y, b.ego.y);
  EXPECT_EQ(a.progress.route.lanes, b.progress.route.lanes);
  ASSERT_EQ(a.agents.size(), b.agents.size());
  EXPECT_EQ(a.agents.size(), 5u);
  for (std::size_t i = 0; i < a.agents.size(); ++i) EXPECT_EQ(a.agents[i].s, b.agents[i].s);
}

TEST(Spawn, StartPosesAreOnCentrelineAndAligned) {
  auto map = resolve_map("town");
  ScenarioConfig sc;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const WorldState w = spawn_episode(map, sc, seed);
    const auto p = project(*map, w.ego_lane, w.ego.pose());
    EXPECT_NEAR(p.e, 0.0, 1e-9);
    EXPECT_NEAR(p.theta_e, 0.0, 1e-9);
    EXPECT_GE(w.progress.route.cost, sc.min_goal_cost);
    EXPECT_LE(w.progress.route.cost, sc.max_goal_cost);
    EXPECT_GE(w.time_budget, 30.0);
  }
}

TEST(Spawn, SlowBlockerFifteenMetresAhead) {
  auto map = resolve_map("loop");
  ScenarioConfig sc;
  sc.kind = "slow_blocker";
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const WorldState w = spawn_episode(map, sc, seed);
    ASSERT_EQ(w.agents.size(), 1u);
    const TrafficAgent& a = w.agents[0];
    EXPECT_EQ(a.policy, AgentPolicy::kSlowBlocker);
    EXPECT_NEAR(a.state.v, 0.3 * map->lane(a.lane).speed_limit, 1e-12);
    const double ds = a.lane == w.ego_lane ? a.s - w.ego_s
                                           : map->lane(w.ego_lane).length() - w.ego_s + a.s;
    EXPECT_NEAR(ds, 15.0, 1e-9);
    if (a.lane != w.ego_lane) {
      EXPECT_EQ(w.progress.next_on_route(*map, w.ego_lane), a.lane);
    }
  }
}

TEST(Agents, StopAtRedHoldsBeforeStopLine) {
  auto map = light_road(60.0);
  WorldState w = world_on(map, 0, 2.5, 0.0, 10.0);
  TrafficAgent a;
  a.lane = 0;
  a.s = 10.0;
  a.cruise_speed = 8.0;
  a.state.v = 8.0;
  a.policy = AgentPolicy::kStopAtRed;
  w.agents.push_back(a);
  w.time = 7.0;  // green until t = 10, red until t = 20
  double max_front = 0.0;
  for (int i = 0; i < 180; ++i) {
    advance_agents(w, 0.1);
    w.time += 0.1;
    ASSERT_EQ(w.agents.size(), 1u);
    if (w.time < 20.0) max_front = std::max(max_front, w.agents[0].s + 2.25);
  }
  EXPECT_LE(max_front, 60.0);
  EXPECT_GT(max_front, 55.0);
  EXPECT_GT(w.agents[0].s, 60.0);  // drove on after the light turned green
}

TEST(Agents, FollowersDoNotRearEndSlowLeaders) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::two_lane_loop()));
  WorldState w = world_on(map, map->index_of("out_n"), 10.0, 0.0, 20.0);
  auto add = [&](double s, double v) {
    TrafficAgent a;
    a.lane = map->index_of("in_s");
    a.s = s;
    a.cruise_speed = v;
    a.state.v = v;
    w.agents.push_back(a);
  };
  add(30.0, 2.0);
  add(5.0, 10.0);
  for (int i = 0; i < 600; ++i) {
    advance_agents(w, 0.1);
    ASSERT_FALSE(footprints_overlap(w.agents[0].state.footprint(), w.agents[1].state.footprint()))
        << "step " << i;
  }
}

TEST(Scenario, ParsesDocumentAndRejectsUnknownKind) {
  const ScenarioConfig c = load_scenario(R"({"map": "straight", "kind": "traffic",
      "traffic_agents": 3, "seed": 9, "time_budget": 45, "goal_cost": [50, 120],
      "agents": [{"lane": "r1", "s": 40, "speed": 3, "policy": "slow_blocker"}]})");
  EXPECT_EQ(c.map, "straight");
  EXPECT_EQ(c.traffic_agents, 3);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.world.time_budget, 45.0);
  EXPECT_DOUBLE_EQ(c.max_goal_cost, 120.0);
  ASSERT_EQ(c.agents.size(), 1u);
  EXPECT_EQ(c.agents[0].policy, AgentPolicy::kSlowBlocker);
  EXPECT_THROW(load_scenario(R"({"kind": "zoo"})"), std::invalid_argument);
  EXPECT_THROW(load_scenario("{"), std::invalid_argument);
}

TEST(Trace, OneRowPerStep) {
  auto map = std::make_shared<const RoadMap>(load_map(maps::straight_road(1, 200.0)));
  WorldState w = world_on(map, 0, 10.0, 1.0, 190.0);
  std::ostringstream out;
  TraceWriter trace(out);
  for (int i = 0; i < 3; ++i) {
    dyn_step(w, 1.0, 0.0);
    trace.write(w, Behavior::kKeep);
  }
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x,y,psi,v,omega,behavior,outcome");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_NE(line.find(",keep,running"), std::string::npos);
  }
  EXPECT_EQ(rows, 3);
}
