#pragma once

#include <string>

namespace hbmp::maps {

/// Straight one-way road along +x with `lanes` parallel lanes.
std::string straight_road(int lanes = 2, double length = 200.0, double speed_limit = 10.0);

/// Counter-clockwise two-lane oval: two straights joined by half circles.
/// Inner lane radius `radius`, outer lane `radius + width`.
std::string two_lane_loop(double straight = 100.0, double radius = 30.0,
                          double speed_limit = 10.0);

/// Single circular-arc lane (for curvature and curvilinear tests).
std::string arc_road(int lanes = 3, double radius = 25.0, double sweep = 1.5,
                     double speed_limit = 10.0);

struct TownOptions {
  int nx = 3;
  int ny = 3;
  double block = 80.0;
  int lanes_per_direction = 1;
  double speed_limit = 8.0;
  double arm_length = 0.0;   // > 0 adds stub roads on the boundary
  bool lights = true;        // lights at nodes with at least three roads
  // Restrict arms to these compass directions ("NESW" subset); empty = all.
  std::string arm_sides;
};

/// Manhattan grid of intersections with two-way roads, right-hand traffic.
std::string town(const TownOptions& options);

/// One intersection with four one-lane arms (12 connectors).
std::string four_way(double arm_length = 100.0);

/// A two-lane road with one left turn at a single intersection.
std::string one_turn(double arm_length = 120.0);

/// Builtin map by name: straight, loop, arc, four_way, one_turn, town (two lanes
/// per direction), town1 (one lane per direction).
std::string builtin(const std::string& name);

}  // namespace hbmp::maps
