#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "hbmp/maps.hpp"
#include "hbmp/path.hpp"
#include "hbmp/world.hpp"

namespace hbmp {
namespace {

TEST(LoadMap, StraightTwoLaneRoadHasMutualNeighbours) {
  const RoadMap map = load_map(maps::straight_road(2, 200.0));
  ASSERT_EQ(map.lanes().size(), 2u);
  const LaneIndex r0 = map.index_of("r0");
  const LaneIndex r1 = map.index_of("r1");
  EXPECT_EQ(map.lane(r0).left, r1);
  EXPECT_EQ(map.lane(r1).right, r0);
  EXPECT_EQ(map.lane(r0).group, map.lane(r1).group);
}

TEST(LoadMap, FourWayIntersectionSynthesisesTwelveConnectors) {
  // Four approaches, each allowing left, straight and right: 4 x 3.
  const RoadMap map = load_map(maps::four_way());
  EXPECT_EQ(map.virtual_lane_count(), 12u);
  int left = 0, straight = 0, right = 0;
  for (const Lane& l : map.lanes()) {
    if (!l.is_virtual) continue;
    ASSERT_TRUE(l.maneuver.has_value());
    ASSERT_EQ(l.successors.size(), 1u);
    left += *l.maneuver == Maneuver::kLeft;
    straight += *l.maneuver == Maneuver::kStraight;
    right += *l.maneuver == Maneuver::kRight;
    // Connectors join their endpoints exactly.
    const Lane& out = map.lane(l.successors.front());
    EXPECT_LT(norm(l.centerline.points().back() - out.centerline.points().front()), 1e-9);
  }
  EXPECT_EQ(left, 4);
  EXPECT_EQ(straight, 4);
  EXPECT_EQ(right, 4);
}

TEST(LoadMap, RejectsMissingNeighbour) {
  const std::string doc = R"({"lanes":[{"id":"a","centerline":[[0,0],[10,0]],"left":"ghost"}]})";
  EXPECT_THROW(load_map(doc), MapError);
}

TEST(LoadMap, RejectsAsymmetricNeighbours) {
  const std::string doc = R"({"lanes":[
    {"id":"a","centerline":[[0,0],[10,0]],"left":"b"},
    {"id":"b","centerline":[[0,3.5],[10,3.5]]}]})";
  EXPECT_THROW(load_map(doc), MapError);
}

TEST(LoadMap, RejectsSchemaViolations) {
  EXPECT_THROW(load_map("not json"), MapError);
  EXPECT_THROW(load_map(R"({"lanes":[{"id":"a","centerline":[[0,0]]}]})"), MapError);
  EXPECT_THROW(load_map(R"({"lanes":[{"id":"a","centerline":[[0,0],[0,0]]}]})"), MapError);
  EXPECT_THROW(load_map(R"({"lanes":[{"id":"a","centerline":[[0,0],[1,0]],"width":0}]})"),
               MapError);
  EXPECT_THROW(load_map(R"({"lanes":[{"id":"a","centerline":[[0,0],[1,0]],"successors":["z"]}]})"),
               MapError);
}

TEST(Project, OnCentrelineAligned) {
  const RoadMap map = load_map(maps::straight_road(1, 100.0));
  const auto cp = project(map, 0, {30.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(cp.s, 30.0);
  EXPECT_DOUBLE_EQ(cp.e, 0.0);
  EXPECT_DOUBLE_EQ(cp.theta_e, 0.0);
}

TEST(Project, OneMetreLeftOfStraightLane) {
  const RoadMap map = load_map(maps::straight_road(1, 100.0));
  const auto cp = project(map, 0, {30.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(cp.e, 1.0);
  EXPECT_DOUBLE_EQ(cp.theta_e, 0.0);
  EXPECT_DOUBLE_EQ(cp.kappa, 0.0);
}

TEST(Project, OutsideCaptureRangeThrows) {
  const RoadMap map = load_map(maps::straight_road(1, 100.0));
  EXPECT_THROW(project(map, 0, {30.0, 7.01, 0.0}), ProjectionError);
  EXPECT_NO_THROW(project(map, 0, {30.0, 6.99, 0.0}));
}

TEST(Project, HeadingErrorIsWrapped) {
  const RoadMap map = load_map(maps::straight_road(1, 100.0));
  const auto cp = project(map, 0, {30.0, 0.0, 3.0 * std::numbers::pi / 2});
  EXPECT_NEAR(cp.theta_e, -std::numbers::pi / 2, 1e-12);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
}

// Polyline sampling of a circle; curvature must approach 1/R.
RoadMap circle_lane(double radius, double step) {
  std::vector<Vec2> pts{{radius, 0.0}};
  append_arc(pts, {0.0, 0.0}, radius, 0.0, 1.5 * std::numbers::pi, step);
  Lane l;
  l.id = "c";
  l.centerline = Polyline(pts);
  return build_map({l}, {});
}

TEST(Project, CircularArcCurvature) {
  const RoadMap map = circle_lane(20.0, 0.5);
  const double a = 2.0;
  const auto cp = project(map, 0, {20.0 * std::cos(a), 20.0 * std::sin(a), a + std::numbers::pi / 2});
  EXPECT_NEAR(cp.kappa, 0.05, 1e-3);
  EXPECT_NEAR(cp.e, 0.0, 1e-2);
  EXPECT_NEAR(cp.theta_e, 0.0, 1e-2);
}

TEST(Project, CurvatureConvergesWithSamplingDensity) {
  const double radius = 20.0;
  const double a = 2.0;
  const Pose2 pose{radius * std::cos(a), radius * std::sin(a), a + std::numbers::pi / 2};
  const double coarse = std::abs(project(circle_lane(radius, 4.0), 0, pose).kappa - 1.0 / radius);
  const double fine = std::abs(project(circle_lane(radius, 2.0), 0, pose).kappa - 1.0 / radius);
  EXPECT_GT(coarse, 0.0);
  EXPECT_LE(fine, 0.5 * coarse);
}

TEST(Project, ReconstructIsIdentityOnCentreline) {
  const RoadMap map = load_map(maps::two_lane_loop());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const LaneIndex lane = rng() % map.lanes().size();
    const Polyline& c = map.lane(lane).centerline;
    const double s = std::uniform_real_distribution<double>(0.0, c.length())(rng);
    const Vec2 p = c.point_at(s);
    const auto cp = project(map, lane, {p.x, p.y, c.heading_at(s)});
    const Vec2 back = c.to_world(cp.s, cp.e);
    EXPECT_LT(norm(back - p), 1e-6);
  }
}

TEST(LightState, CyclicLookup) {
  TrafficLight l;
  l.phases = {{LightColor::kGreen, 10}, {LightColor::kYellow, 3}, {LightColor::kRed, 10}};
  EXPECT_EQ(light_state(l, 0.0).color, LightColor::kGreen);
  EXPECT_EQ(light_state(l, 12.0).color, LightColor::kYellow);
  EXPECT_NEAR(light_state(l, 12.0).time_into_phase, 2.0, 1e-12);
  EXPECT_EQ(light_state(l, 23.0).color, LightColor::kGreen);
  EXPECT_EQ(light_state(l, 15.0).color, LightColor::kRed);
}

TEST(PlanRoute, SameLane) {
  const RoadMap map = load_map(maps::straight_road(2, 200.0));
  const Route r = plan_route(map, {0, 10.0}, {0, 150.0});
  ASSERT_EQ(r.lanes.size(), 1u);
  EXPECT_DOUBLE_EQ(r.cost, 140.0);
}

TEST(PlanRoute, GoalOnLeftNeighbourUsesOneLaneChange) {
  const RoadMap map = load_map(maps::straight_road(2, 200.0));
  const Route r = plan_route(map, {0, 10.0}, {1, 150.0});
  ASSERT_EQ(r.lanes.size(), 2u);
  EXPECT_EQ(r.lanes[0], map.index_of("r0"));
  EXPECT_EQ(r.lanes[1], map.index_of("r1"));
  EXPECT_EQ(r.lane_changes, 1);
}

TEST(PlanRoute, UnreachableGoalThrows) {
  const RoadMap map = load_map(maps::straight_road(1, 200.0));
  EXPECT_THROW(plan_route(map, {0, 100.0}, {0, 50.0}), RouteError);
}

TEST(PlanRoute, LoopWrapsAroundToGoalBehindStart) {
  const RoadMap map = load_map(maps::two_lane_loop());
  const LaneIndex s = map.index_of("in_s");
  const Route r = plan_route(map, {s, 50.0}, {s, 20.0});
  ASSERT_EQ(r.lanes.size(), 5u);
  EXPECT_EQ(r.lanes.front(), s);
  EXPECT_EQ(r.lanes.back(), s);
  EXPECT_EQ(r.lane_changes, 0);
  const double arc = map.lane(map.index_of("in_e")).length();
  EXPECT_NEAR(r.cost, 50.0 + arc + 100.0 + arc + 20.0, 1e-9);
}

TEST(PlanRoute, LaneChangeCannotMoveBackwards) {
  const RoadMap map = load_map(maps::straight_road(2, 200.0));
  EXPECT_THROW(plan_route(map, {0, 100.0}, {1, 50.0}), RouteError);
  EXPECT_THROW(plan_route(map, {0, 100.0}, {0, 50.0}), RouteError);
}

TEST(PlanRoute, OuterRingIsChargedItsOwnLength) {
  const RoadMap map = load_map(maps::two_lane_loop());
  const LaneIndex in_s = map.index_of("in_s");
  const LaneIndex out_e = map.index_of("out_e");
  const Route r = plan_route(map, {in_s, 50.0}, {out_e, 10.0});
  // Changing on the straight then driving the outer arc, or the inner arc
  // then changing: the straight is the same length either way, the inner
  // arc route ends on out_e and is charged up to goal_s on that lane.
  EXPECT_NEAR(r.cost, 50.0 + 10.0, 1e-9);
  EXPECT_EQ(r.lane_changes, 1);
  EXPECT_EQ(r.lanes.back(), out_e);
}

// Independent oracle: Bellman-Ford over (lane, reached-in-start-stretch)
// states keyed by the cost already paid when the lane's stretch was entered.
double oracle_cost(const RoadMap& map, const CurvilinearPose& start, const CurvilinearPose& goal) {
  const std::size_t n = map.lanes().size();
  const double inf = std::numeric_limits<double>::infinity();
  const double f0 = start.s / map.lane(start.lane).length();
  // entered[l] : cost paid when entering the stretch of l from its start.
  // first[l]   : l reachable laterally within the start stretch.
  std::vector<double> entered(n, inf);
  std::vector<bool> first(n, false);
  first[start.lane] = true;
  for (bool grew = true; grew;) {
    grew = false;
    for (LaneIndex u = 0; u < n; ++u) {
      if (!first[u]) continue;
      for (auto v : {map.lane(u).left, map.lane(u).right}) {
        if (v && !first[*v]) first[*v] = grew = true;
      }
    }
  }
  for (LaneIndex u = 0; u < n; ++u) {
    if (!first[u]) continue;
    for (LaneIndex v : map.lane(u).successors) {
      entered[v] = std::min(entered[v], (1.0 - f0) * map.lane(u).length());
    }
  }
  for (std::size_t it = 0; it < 2 * n; ++it) {
    bool changed = false;
    for (LaneIndex u = 0; u < n; ++u) {
      if (entered[u] == inf) continue;
      for (auto v : {map.lane(u).left, map.lane(u).right}) {
        if (v && entered[u] < entered[*v]) {
          entered[*v] = entered[u];
          changed = true;
        }
      }
      for (LaneIndex v : map.lane(u).successors) {
        const double c = entered[u] + map.lane(u).length();
        if (c < entered[v]) {
          entered[v] = c;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  double best = entered[goal.lane] + goal.s;
  const double goal_entry = f0 * map.lane(goal.lane).length();
  if (first[goal.lane] && goal.s >= goal_entry) best = std::min(best, goal.s - goal_entry);
  return best;
}

class TownRoutes : public ::testing::TestWithParam<std::string> {};

TEST_P(TownRoutes, MatchExhaustiveShortestPath) {
  const RoadMap map = load_map(maps::builtin(GetParam()));
  std::vector<LaneIndex> real;
  for (LaneIndex i = 0; i < map.lanes().size(); ++i) {
    if (!map.lane(i).is_virtual) real.push_back(i);
  }
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const LaneIndex a = real[rng() % real.size()];
    const LaneIndex b = real[rng() % real.size()];
    const CurvilinearPose start{a, 0.5 * map.lane(a).length()};
    const CurvilinearPose goal{b, 0.3 * map.lane(b).length()};
    const double expected = oracle_cost(map, start, goal);
    if (!std::isfinite(expected)) {
      EXPECT_THROW(plan_route(map, start, goal), RouteError);
      continue;
    }
    const Route r = plan_route(map, start, goal);
    EXPECT_NEAR(r.cost, expected, 1e-9);
    EXPECT_NEAR(route_cost(map, r.lanes, start.s, goal.s), r.cost, 1e-9);
    for (std::size_t i = 1; i < r.lanes.size(); ++i) {
      const Lane& prev = map.lane(r.lanes[i - 1]);
      const bool linked = std::count(prev.successors.begin(), prev.successors.end(), r.lanes[i]) ||
                          prev.left == r.lanes[i] || prev.right == r.lanes[i];
      EXPECT_TRUE(linked);
    }
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

INSTANTIATE_TEST_SUITE_P(Maps, TownRoutes, ::testing::Values("town1", "town", "one_turn"));

TEST(ReferencePath, StitchesLanesAcrossLoopPieces) {
  const RoadMap map = load_map(maps::two_lane_loop());
  const LaneIndex s = map.index_of("in_s");
  const auto path = ReferencePath::build(map, s, 95.0, 10.0, 30.0, nullptr);
  EXPECT_NEAR(path.anchor_s(), 11.0, 1e-9);
  EXPECT_GE(path.line().length(), 40.0);
  ASSERT_EQ(path.pieces().size(), 2u);
  EXPECT_EQ(path.pieces()[1].lane, map.index_of("in_e"));
  const auto [left, right] = road_extents(map, s);
  EXPECT_DOUBLE_EQ(left, 1.75);
  EXPECT_DOUBLE_EQ(right, 5.25);
}

TEST(Drivable, StripsOfAllLanes) {
  const RoadMap map = load_map(maps::straight_road(2, 100.0));
  EXPECT_TRUE(map.drivable({50.0, 0.0}));
  EXPECT_TRUE(map.drivable({50.0, 5.0}));
  EXPECT_FALSE(map.drivable({50.0, 5.4}));
  EXPECT_FALSE(map.drivable({50.0, -1.9}));
}

}  // namespace
}  // namespace hbmp
