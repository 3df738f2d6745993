#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hbmp/geometry.hpp"

namespace hbmp {

using LaneIndex = std::size_t;

/// Turn maneuvers permitted from a lane, as a 3-bit mask.
enum class Maneuver : std::uint8_t { kLeft = 1, kStraight = 2, kRight = 4 };
using DirectionMask = std::uint8_t;

inline bool allows(DirectionMask mask, Maneuver m) {
  return (mask & static_cast<std::uint8_t>(m)) != 0;
}
const char* to_string(Maneuver m);
std::optional<Maneuver> maneuver_from_string(const std::string& s);

struct MapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProjectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RouteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Lane {
  std::string id;
  Polyline centerline;
  double width = 3.5;
  std::optional<LaneIndex> left;
  std::optional<LaneIndex> right;
  std::vector<LaneIndex> successors;
  DirectionMask directions = static_cast<DirectionMask>(Maneuver::kStraight);
  double speed_limit = 10.0;
  bool is_virtual = false;
  // Connector lanes only: the maneuver they realise.
  std::optional<Maneuver> maneuver;
  // Lanes joined by neighbour relations share a group; connectors get one
  // group per (from group, to group, maneuver).
  std::size_t group = 0;

  [[nodiscard]] double length() const { return centerline.length(); }
};

enum class LightColor : std::uint8_t { kGreen, kYellow, kRed };
const char* to_string(LightColor c);

struct LightPhase {
  LightColor color = LightColor::kGreen;
  double duration = 1.0;
};

struct TrafficLight {
  std::string id;
  std::vector<LaneIndex> lanes;
  std::vector<double> stop_line_s;  // parallel to `lanes`
  std::vector<LightPhase> phases;
  double offset = 0.0;              // seconds added to sim time
};

struct LightState {
  LightColor color = LightColor::kGreen;
  double time_into_phase = 0.0;
};

LightState light_state(const TrafficLight& light, double sim_time);

struct CurvilinearPose {
  LaneIndex lane = 0;
  double s = 0.0;
  double e = 0.0;
  double theta_e = 0.0;
  double kappa = 0.0;
};

struct Route {
  std::vector<LaneIndex> lanes;
  double goal_s = 0.0;
  double cost = 0.0;          // graph cost; see plan_route
  int lane_changes = 0;
};

/// Stop line governing a lane: which light and where.
struct StopLine {
  std::size_t light = 0;
  double s = 0.0;
};

class RoadMap {
 public:
  RoadMap() = default;

  [[nodiscard]] const std::vector<Lane>& lanes() const { return lanes_; }
  [[nodiscard]] const Lane& lane(LaneIndex i) const { return lanes_.at(i); }
  [[nodiscard]] const std::vector<TrafficLight>& lights() const { return lights_; }
  [[nodiscard]] std::optional<LaneIndex> find(const std::string& id) const;
  [[nodiscard]] LaneIndex index_of(const std::string& id) const;
  [[nodiscard]] std::optional<StopLine> stop_line(LaneIndex lane) const;
  [[nodiscard]] const std::vector<LaneIndex>& predecessors(LaneIndex lane) const {
    return predecessors_.at(lane);
  }
  [[nodiscard]] std::size_t group_count() const { return group_count_; }
  [[nodiscard]] std::size_t virtual_lane_count() const;
  [[nodiscard]] double max_speed_limit() const;

  /// True when the point lies on the strip of any lane.
  [[nodiscard]] bool drivable(Vec2 p) const;

  friend RoadMap load_map(const std::string& document);
  friend RoadMap build_map(std::vector<Lane> lanes, std::vector<TrafficLight> lights);

 private:
  void index();

  std::vector<Lane> lanes_;
  std::vector<TrafficLight> lights_;
  std::unordered_map<std::string, LaneIndex> by_id_;
  std::unordered_map<LaneIndex, StopLine> stop_lines_;
  std::vector<std::vector<LaneIndex>> predecessors_;
  std::vector<std::pair<Vec2, Vec2>> lane_bounds_;  // inflated AABBs
  std::size_t group_count_ = 0;
};

/// Parses and validates a JSON map document (lanes, lights, intersections),
/// synthesising connector lanes for every permitted intersection maneuver.
RoadMap load_map(const std::string& document);
RoadMap load_map_file(const std::string& path);

/// Validates lane invariants, assigns groups and indexes lookups.
RoadMap build_map(std::vector<Lane> lanes, std::vector<TrafficLight> lights);

/// Nearest-point projection of a world pose onto a lane's centerline.
/// Throws ProjectionError when |e| exceeds twice the lane width.
CurvilinearPose project(const RoadMap& map, LaneIndex lane, const Pose2& pose);

/// Lane-level A*. Each stretch of road is charged the length of the lane the
/// route leaves it by, so a lane change swaps which parallel lane is charged
/// and adds no cost of its own. Lane changes keep the fraction of progress
/// along the stretch: the start stretch is charged from start.s onward and the
/// goal lane only up to goal.s. Ties prefer fewer lane changes.
Route plan_route(const RoadMap& map, const CurvilinearPose& start, const CurvilinearPose& goal);

/// Cost of an explicit lane sequence under the plan_route metric.
double route_cost(const RoadMap& map, const std::vector<LaneIndex>& lanes, double start_s,
                  double goal_s);

}  // namespace hbmp
