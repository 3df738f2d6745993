#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hbmp/maps.hpp"
#include "hbmp/motion.hpp"

using namespace hbmp;

namespace {

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

std::shared_ptr<const RoadMap> straight(int lanes) {
  return std::make_shared<const RoadMap>(load_map(maps::straight_road(lanes, 300.0)));
}

void park(WorldState& w, LaneIndex lane, double s) {
  TrafficAgent a;
  a.lane = lane;
  a.s = s;
  a.cruise_speed = 0.0;
  const Polyline& c = w.road().lane(lane).centerline;
  const Vec2 p = c.point_at(s);
  a.state.x = p.x;
  a.state.y = p.y;
  a.state.psi = c.heading_at(s);
  w.agents.push_back(a);
}

RoadProfile profile_with(double e_l, double e_r, double delta_v) {
  RoadProfile p;
  p.e_l = e_l;
  p.e_r = e_r;
  p.delta_v = delta_v;
  return p;
}

}  // namespace

TEST(ResolveBehavior, ConflictsFallBackToKeep) {
  EXPECT_EQ(resolve_behavior(Behavior::kChangeLeft, profile_with(0, 1, 0.5)), Behavior::kKeep);
  EXPECT_EQ(resolve_behavior(Behavior::kChangeLeft, profile_with(1, 0, 0.5)),
            Behavior::kChangeLeft);
  EXPECT_EQ(resolve_behavior(Behavior::kChangeRight, profile_with(1, 0, 0.5)), Behavior::kKeep);
  EXPECT_EQ(resolve_behavior(Behavior::kSpeedUp, profile_with(1, 1, 1.0)), Behavior::kKeep);
  EXPECT_EQ(resolve_behavior(Behavior::kSpeedUp, profile_with(1, 1, 0.99)), Behavior::kSpeedUp);
  EXPECT_EQ(resolve_behavior(Behavior::kSpeedDown, profile_with(0, 0, 1.2)), Behavior::kSpeedDown);
  for (double dv : {0.0, 0.5, 1.5}) {
    EXPECT_EQ(resolve_behavior(Behavior::kKeep, profile_with(0, 0, dv)), Behavior::kKeep);
  }
}

TEST(ReferenceVelocity, KeepIsFlat) {
  const auto p = reference_velocity(Behavior::kKeep, 5.0, 10.0, 3.0, 0.1, 20);
  EXPECT_EQ(p.v_ref, 5.0);
  ASSERT_EQ(p.profile.size(), 20u);
  for (double v : p.profile) EXPECT_EQ(v, 5.0);
}

TEST(ReferenceVelocity, SpeedUpRampsAtAmaxThenHolds) {
  const auto p = reference_velocity(Behavior::kSpeedUp, 10.0, 15.0, 3.0, 0.1, 20);
  EXPECT_DOUBLE_EQ(p.v_ref, 12.0);
  for (int k = 0; k < 20; ++k) {
    EXPECT_NEAR(p.profile[k], std::min(12.0, 10.0 + 0.3 * (k + 1)), 1e-12) << k;
  }
}

TEST(ReferenceVelocity, Clamps) {
  EXPECT_DOUBLE_EQ(reference_velocity(Behavior::kSpeedDown, 0.5, 10, 3, 0.1, 5).v_ref, 0.5);
  EXPECT_DOUBLE_EQ(reference_velocity(Behavior::kSpeedDown, 10.0, 10, 3, 0.1, 5).v_ref, 8.0);
  EXPECT_DOUBLE_EQ(reference_velocity(Behavior::kSpeedUp, 9.0, 10, 3, 0.1, 5).v_ref, 10.0);
  EXPECT_DOUBLE_EQ(reference_velocity(Behavior::kSpeedUp, 0.0, 10, 3, 0.1, 5).v_ref, 0.5);
}

TEST(TrackingOmega, Examples) {
  EXPECT_EQ(tracking_omega(5.0, {0, 0, 0, 0, 0}, 1.0, 0.5, 10.0).omega, 0.0);
  EXPECT_NEAR(tracking_omega(10.0, {0, 0, 0, 0, 0.05}, 1.0, 0.5, 10.0).omega, 0.5, 1e-12);
  const double hand = -5.0 * 0.1 - 0.5 * 5.0 * (std::sin(0.1) / 0.1) * 1.0;
  const auto r = tracking_omega(5.0, {0, 0, 1.0, 0.1, 0.0}, 1.0, 0.5, 10.0);
  EXPECT_NEAR(r.omega, hand, 1e-12);
  EXPECT_NEAR(r.omega, -2.9958, 1e-4);
  EXPECT_FALSE(r.singular);
}

TEST(TrackingOmega, ClampsAndFlagsSingularity) {
  EXPECT_DOUBLE_EQ(tracking_omega(5.0, {0, 0, 1.0, 0.1, 0.0}, 1.0, 0.5, 1.5).omega, -1.5);
  const auto left = tracking_omega(5.0, {0, 0, 2.0, 0.0, 0.5}, 1.0, 0.5, 1.5);
  EXPECT_TRUE(left.singular);
  EXPECT_DOUBLE_EQ(left.omega, -1.5);
  const auto right = tracking_omega(5.0, {0, 0, -2.0, 0.0, -0.5}, 1.0, 0.5, 1.5);
  EXPECT_TRUE(right.singular);
  EXPECT_DOUBLE_EQ(right.omega, 1.5);
}

TEST(TrackingOmega, ContinuousThroughZeroHeadingError) {
  for (double e : {-1.0, 0.3, 2.0}) {
    for (double kappa : {0.0, 0.02, -0.05}) {
      const double a = tracking_omega(7.0, {0, 0, e, 0.0, kappa}, 1.0, 0.5, 10.0).omega;
      const double b = tracking_omega(7.0, {0, 0, e, 1e-9, kappa}, 1.0, 0.5, 10.0).omega;
      const double c = tracking_omega(7.0, {0, 0, e, -1e-9, kappa}, 1.0, 0.5, 10.0).omega;
      EXPECT_LT(std::abs(a - b), 1e-6);
      EXPECT_LT(std::abs(a - c), 1e-6);
    }
  }
}

TEST(TrackingOmega, ClosedLoopConvergesOnStraightLane) {
  const VehicleLimits lim;
  Pose2 p{0.0, 1.0, 0.0};
  const double v = 5.0, dt = 0.01;
  std::vector<double> err;
  for (int k = 0; k < 1000; ++k) {
    const CurvilinearPose cp{0, p.x, p.y, p.psi, 0.0};
    const double w = tracking_omega(v, cp, 1.0, 0.5, lim.omega_max).omega;
    p = integrate_unicycle(p, v, w, dt);
    err.push_back(std::abs(p.y));
  }
  EXPECT_LT(err.back(), 0.05);
  bool reached = false;
  for (double x : err) reached = reached || x < 0.05;
  // The linearised loop is underdamped (zeta = 1 / (2 sqrt(k_e)) ~ 0.71):
  // after the first second the local peaks of |e| must shrink.
  double last_peak = 1.0;
  for (std::size_t k = 100; k + 1 < err.size(); ++k) {
    if (err[k] >= err[k - 1] && err[k] > err[k + 1]) {
      EXPECT_LT(err[k], last_peak) << "step " << k;
      last_peak = err[k];
    }
  }
  EXPECT_LT(last_peak, 0.05);
  EXPECT_TRUE(reached);
}

TEST(SpanSamples, CardinalityAndSharedHorizon) {
  WorldState w = world_on(straight(2), 0, 50.0, 5.0, 250.0);
  const ReferencePath ref = reference_path(w, 0);
  const PlannerConfig cfg;
  const auto plan = reference_velocity(Behavior::kKeep, 5.0, 10.0, 3.0, 0.1, cfg.horizon);
  const auto s = span_samples(w.ego, ref, plan, cfg, w.config.limits, w.v_max(), 0.1);
  ASSERT_EQ(s.size(), 15u);
  for (const auto& x : s) {
    EXPECT_EQ(x.horizon(), 20);
    EXPECT_EQ(x.omega.size(), 20u);
    EXPECT_EQ(x.poses.size(), 20u);
    for (double v : x.v) EXPECT_GE(v, 0.0);
  }
}

TEST(SpanSamples, ZeroPerturbationIsPureTrackingRollout) {
  WorldState w = world_on(straight(2), 0, 50.0, 5.0, 250.0);
  w.ego.y = 0.8;
  w.ego.psi = 0.05;
  const ReferencePath ref = reference_path(w, 0);
  PlannerConfig cfg;
  cfg.v_offsets = {0.0};
  cfg.omega_offsets = {0.0};
  const auto plan = reference_velocity(Behavior::kKeep, 5.0, 10.0, 3.0, 0.1, cfg.horizon);
  const auto s = span_samples(w.ego, ref, plan, cfg, w.config.limits, w.v_max(), 0.1);
  ASSERT_EQ(s.size(), 1u);
  // The lane is the x axis, so the curvilinear pose is (x, y, psi).
  Pose2 p = w.ego.pose();
  for (int k = 0; k < 20; ++k) {
    const double om = tracking_omega(5.0, {0, p.x, p.y, p.psi, 0.0}, 1.0, 0.5, 1.5).omega;
    EXPECT_NEAR(s[0].omega[k], om, 1e-9);
    p = integrate_unicycle(p, 5.0, om, 0.1);
    EXPECT_NEAR(s[0].poses[k].x, p.x, 1e-9);
    EXPECT_NEAR(s[0].poses[k].y, p.y, 1e-9);
  }
}

TEST(SpanSamples, AllConvergeFromOneMetreOffset) {
  WorldState w = world_on(straight(2), 0, 50.0, 5.0, 250.0);
  w.ego.y = 1.0;
  const ReferencePath ref = reference_path(w, 0);
  const PlannerConfig cfg;
  const auto plan = reference_velocity(Behavior::kKeep, 5.0, 10.0, 3.0, 0.1, cfg.horizon);
  for (const auto& x : span_samples(w.ego, ref, plan, cfg, w.config.limits, w.v_max(), 0.1)) {
    EXPECT_LT(std::abs(x.poses.back().y), 1.0);
  }
}

TEST(EvaluateCost, Identities) {
  const PlannerConfig cfg;
  const std::vector<double> none(20, 0.0);
  const auto a = cost_of(std::vector<double>(20, 4.0), 4.0, none, cfg);
  EXPECT_EQ(a.c_velocity, 0.0);
  EXPECT_DOUBLE_EQ(a.c_dist, 1.0 / 81.0);
  EXPECT_EQ(a.c_obs, 0.0);
  const auto b = cost_of(std::vector<double>(20, 0.0), 3.0, none, cfg);
  EXPECT_EQ(b.c_dist, 1.0);
  EXPECT_DOUBLE_EQ(b.c_velocity, 3.0);
  // t = 1, 2: (1*|2-1| + 4*|2-2|) / (1 + 4)
  const auto c = cost_of({1.0, 2.0}, 2.0, {0.25, 0.5}, cfg);
  EXPECT_DOUBLE_EQ(c.c_velocity, 0.2);
  EXPECT_DOUBLE_EQ(c.c_dist, 0.25);
  EXPECT_DOUBLE_EQ(c.c_obs, 0.75);
  EXPECT_DOUBLE_EQ(c.c_total, 1.0 * 0.2 + 1.0 * 0.25 + 2.0 * 0.75);
}

TEST(ObstacleField, ClearancesAgainstHandValues) {
  WorldState w = world_on(straight(2), 0, 50.0, 5.0, 250.0);
  const GridMapper mapper(w, GridFrame::kVehicleCentric, nullptr);
  const ObstacleField ahead({{10.25, 0.25}}, 0.5, 0.5, mapper, 4.5, 1.8);
  auto [lon, lat] = ahead.clearances(w.ego.pose());
  EXPECT_NEAR(lon, 10.25 - 0.25 - 2.25, 1e-12);
  EXPECT_TRUE(std::isinf(lat));
  const ObstacleField beside({{0.25, 3.25}}, 0.5, 0.5, mapper, 4.5, 1.8);
  std::tie(lon, lat) = beside.clearances(w.ego.pose());
  EXPECT_TRUE(std::isinf(lon));
  EXPECT_NEAR(lat, 3.25 - 0.25 - 0.9, 1e-12);
  EXPECT_FALSE(ahead.collides(w.ego.pose()));
  EXPECT_TRUE(ahead.collides({w.ego.x + 8.0, w.ego.y, 0.0}));

  PlannerConfig cfg;
  TrajectorySample s;
  s.v = {1.0};
  s.omega = {0.0};
  s.poses = {w.ego.pose()};
  const double phi_lon = 1.0 - 7.75 / 5.0;
  EXPECT_DOUBLE_EQ(obstacle_terms(s, ahead, cfg).front(), std::max(0.0, phi_lon));
  EXPECT_DOUBLE_EQ(obstacle_terms(s, beside, cfg).front(), 0.0);
  const ObstacleField close({{0.25, 1.75}}, 0.5, 0.5, mapper, 4.5, 1.8);
  EXPECT_NEAR(obstacle_terms(s, close, cfg).front(), 0.5 * (1.0 - 0.6 / 1.5), 1e-12);
}

TEST(SelectSample, ArgminWithTieBreaks) {
  std::vector<TrajectorySample> s(4);
  s[0].omega_offset = 0.4;
  s[1].omega_offset = -0.2;
  s[2].omega_offset = 0.2;
  s[3].omega_offset = 0.0;
  std::vector<CostBreakdown> c(4);
  c[0].c_total = 1.0;
  c[1].c_total = 1.0;
  c[2].c_total = 1.0;
  c[3].c_total = 0.5;
  EXPECT_EQ(select_sample(c, {false, false, false, true}, s), 1u);
  EXPECT_EQ(select_sample(c, {false, false, false, false}, s), 3u);
  EXPECT_EQ(select_sample(c, {true, true, true, true}, s), std::nullopt);
}

TEST(SelectAndExecute, KeepOnEmptyLaneCompletesAtFirstCheck) {
  WorldState w = world_on(straight(2), 0, 50.0, 5.0, 250.0);
  const PlannerConfig cfg;
  const auto ex = select_and_execute(Behavior::kKeep, w, cfg);
  EXPECT_TRUE(ex.converged);
  EXPECT_FALSE(ex.emergency);
  EXPECT_NEAR(ex.duration, cfg.min_hold, 1e-9);
  for (double v : ex.v) EXPECT_NEAR(v, 5.0, 1e-9);
  for (const auto& p : ex.poses) EXPECT_NEAR(p.y, 0.0, 1e-9);
  EXPECT_EQ(ex.cost.c_obs, 0.0);
  EXPECT_EQ(ex.cost.c_velocity, 0.0);
  EXPECT_DOUBLE_EQ(ex.cost.c_dist, 1.0 / (1.0 + 5.0 * ex.v.size()));
}

TEST(SelectAndExecute, ChangeLeftReachesLeftCentreline) {
  WorldState w = world_on(straight(2), 0, 30.0, 5.0, 280.0);
  PlannerConfig cfg;
  cfg.timeout = 10.0;
  const auto ex = select_and_execute(Behavior::kChangeLeft, w, cfg);
  EXPECT_TRUE(ex.converged);
  EXPECT_EQ(w.ego_lane, 1u);
  EXPECT_LT(std::abs(w.ego.y - 3.5), cfg.done_e);
  EXPECT_LT(std::abs(w.ego.psi), cfg.done_theta);
  EXPECT_FALSE(w.status.terminal());
}

TEST(SelectAndExecute, ChangeLeftThenKeepUnderDecisionTimeout) {
  WorldState w = world_on(straight(2), 0, 30.0, 5.0, 280.0);
  const PlannerConfig cfg;
  auto ex = execute_behavior(Behavior::kChangeLeft, w, cfg);
  EXPECT_EQ(ex.resolved, Behavior::kChangeLeft);
  EXPECT_LE(ex.duration, cfg.timeout + 1e-9);
  for (int k = 0; k < 10 && !ex.converged; ++k) ex = execute_behavior(Behavior::kKeep, w, cfg);
  EXPECT_TRUE(ex.converged);
  EXPECT_EQ(w.ego_lane, 1u);
}

TEST(SelectAndExecute, ChangeLeftWithoutNeighbourKeeps) {
  WorldState w = world_on(straight(2), 1, 30.0, 5.0, 280.0);
  const auto ex = execute_behavior(Behavior::kChangeLeft, w, PlannerConfig{});
  EXPECT_EQ(ex.resolved, Behavior::kKeep);
  EXPECT_EQ(w.ego_lane, 1u);
}

TEST(SelectAndExecute, WallAheadTriggersEmergencyStop) {
  WorldState w = world_on(straight(2), 0, 50.0, 8.0, 250.0);
  park(w, 0, 58.0);
  park(w, 1, 58.0);
  const PlannerConfig cfg;
  bool all_pruned = false;
  PlannerHooks hooks;
  hooks.on_plan = [&](const WorldState&, const PlanStep& step) {
    all_pruned = !step.chosen && std::all_of(step.pruned.begin(), step.pruned.end(),
                                             [](bool b) { return b; });
  };
  const auto ex = select_and_execute(Behavior::kKeep, w, cfg, &hooks);
  EXPECT_TRUE(all_pruned);
  EXPECT_TRUE(ex.emergency);
  ASSERT_EQ(ex.v.size(), 1u);
  EXPECT_NEAR(ex.v[0], 8.0 - 0.3, 1e-9);
  EXPECT_GT(ex.cost.c_obs, 0.0);
  EXPECT_FALSE(w.status.terminal());
}

TEST(SelectAndExecute, ChoiceIsOptimalAndTermsNonnegative) {
  auto map = resolve_map("town");
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    ScenarioConfig sc;
    sc.kind = "traffic";
    sc.traffic_agents = 8;
    WorldState w = spawn_episode(map, sc, seed);
    PlannerHooks hooks;
    hooks.on_plan = [&](const WorldState&, const PlanStep& step) {
      for (std::size_t i = 0; i < step.costs.size(); ++i) {
        const auto& c = step.costs[i];
        EXPECT_GE(c.c_velocity, 0.0);
        EXPECT_GE(c.c_dist, 0.0);
        EXPECT_GE(c.c_obs, 0.0);
        EXPECT_TRUE(std::isfinite(c.c_total));
        if (step.chosen && !step.pruned[i]) {
          EXPECT_LE(step.costs[*step.chosen].c_total, c.c_total);
        }
      }
      ++checked;
    };
    const Behavior cycle[] = {Behavior::kKeep, Behavior::kSpeedUp, Behavior::kChangeLeft,
                              Behavior::kKeep, Behavior::kChangeRight, Behavior::kSpeedDown};
    for (int k = 0; k < 30 && !w.status.terminal(); ++k) {
      const auto ex = execute_behavior(cycle[k % 6], w, PlannerConfig{}, &hooks);
      EXPECT_GE(ex.cost.c_velocity, 0.0);
      EXPECT_GE(ex.cost.c_obs, 0.0);
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(SampleCsv, OneRowPerSample) {
  WorldState w = world_on(straight(2), 0, 50.0, 5.0, 250.0);
  std::ostringstream out;
  SampleCsvWriter csv(out);
  PlannerHooks hooks;
  hooks.on_plan = [&](const WorldState&, const PlanStep& step) { csv.write(step); };
  const auto ex = select_and_execute(Behavior::kKeep, w, PlannerConfig{}, &hooks);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("decision,time,behavior,sample", 0), 0u);
  int rows = 0, chosen = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.back() == '1') ++chosen;
  }
  EXPECT_EQ(rows, 15 * static_cast<int>(ex.v.size()));
  EXPECT_EQ(chosen, static_cast<int>(ex.v.size()));
}
