#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hbmp/behavior.hpp"
#include "hbmp/geometry.hpp"
#include "hbmp/path.hpp"
#include "hbmp/world.hpp"

namespace hbmp {

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
  double omega = 0.0;
  double length = 4.5;
  double width = 1.8;

  [[nodiscard]] Pose2 pose() const { return {x, y, psi}; }
  [[nodiscard]] Footprint footprint() const { return {pose(), length, width}; }
};

struct VehicleLimits {
  double a_max = 3.0;       // m/s^2
  double omega_max = 1.5;   // rad/s
  double speed_margin = 1.1;  // v_max = speed limit * margin
};

enum class AgentPolicy : std::uint8_t { kConstantSpeedLaneFollow, kSlowBlocker, kStopAtRed };
const char* to_string(AgentPolicy p);
std::optional<AgentPolicy> agent_policy_from_string(const std::string& s);

/// Scripted vehicle riding a lane centreline.
struct TrafficAgent {
  VehicleState state;
  AgentPolicy policy = AgentPolicy::kConstantSpeedLaneFollow;
  LaneIndex lane = 0;
  double s = 0.0;
  double cruise_speed = 0.0;
};

enum class Outcome : std::uint8_t {
  kRunning,
  kGoalReached,
  kCollision,
  kOvertime,
  kRedLightViolation,
  kWrongLane,
};
const char* to_string(Outcome o);

struct EpisodeStatus {
  Outcome outcome = Outcome::kRunning;
  double elapsed = 0.0;

  [[nodiscard]] bool terminal() const { return outcome != Outcome::kRunning; }
};

/// Route as a sequence of lane groups, which is what progress is tracked on:
/// any lane of a group counts as being on the route.
struct RouteProgress {
  Route route;
  std::vector<std::size_t> groups;
  std::vector<std::optional<Maneuver>> maneuvers;  // per group, connectors only
  std::size_t index = 0;
  bool lost = false;  // left the route and no new route exists

  [[nodiscard]] LaneIndex goal_lane() const { return route.lanes.back(); }
  /// Maneuver of the next connector group on the route, if any.
  [[nodiscard]] std::optional<Maneuver> next_maneuver() const;
  /// Route lane to take from `lane` at its end, if the route continues there.
  [[nodiscard]] std::optional<LaneIndex> next_on_route(const RoadMap& map, LaneIndex lane) const;
};

RouteProgress make_progress(const RoadMap& map, Route route);

struct WorldConfig {
  double dt = 0.1;
  double goal_radius = 3.0;
  double commit_distance = 20.0;  // wrong-lane check window before a lane end
  double time_budget = 0.0;       // seconds; 0 means derive from the route
  VehicleLimits limits;
};

/// Shared state of both simulators. The dynamics world integrates the ego
/// pose; the event world places the ego on a lane centreline directly.
struct WorldState {
  std::shared_ptr<const RoadMap> map;
  WorldConfig config;
  double time = 0.0;
  VehicleState ego;
  LaneIndex ego_lane = 0;  // lane the ego is tracked on
  double ego_s = 0.0;
  double ego_e = 0.0;
  std::vector<TrafficAgent> agents;
  RouteProgress progress;
  double time_budget = 30.0;
  EpisodeStatus status;

  // Where the ego was before the last step; used for edge-triggered events.
  LaneIndex prev_lane = 0;
  double prev_s = 0.0;
  double prev_time = 0.0;

  [[nodiscard]] const RoadMap& road() const { return *map; }
  [[nodiscard]] const Lane& lane() const { return map->lane(ego_lane); }
  [[nodiscard]] double speed_limit() const { return lane().speed_limit; }
  [[nodiscard]] double v_max() const { return speed_limit() * config.limits.speed_margin; }
};

/// Unicycle step of the ego with clamped commands, then agents and time.
void dyn_step(WorldState& world, double v_cmd, double omega_cmd);

/// Exact constant-twist pose update.
Pose2 integrate_unicycle(const Pose2& p, double v, double omega, double dt);

/// Event-level step: a behavior completes in one step of config.dt.
void event_step(WorldState& world, Behavior behavior);

/// Speed after a speed_up/speed_down request.
double scaled_speed(Behavior b, double v, double speed_limit);

/// Evaluates terminal events for the current state. Terminal outcomes are
/// absorbing. Priority: collision, red light, wrong lane, overtime, goal.
EpisodeStatus check_events(const WorldState& world);

/// Re-projects the ego onto its lane graph, follows lane ends and neighbours,
/// and advances route progress.
void track_ego(WorldState& world);

/// Moves agents along their lanes for one step.
void advance_agents(WorldState& world, double dt);

struct AgentSpec {
  std::string lane;
  double s = 0.0;
  double speed = 0.0;
  AgentPolicy policy = AgentPolicy::kConstantSpeedLaneFollow;
};

/// What to place around the ego at spawn.
struct ScenarioConfig {
  std::string map = "loop";        // builtin name or path to a map document
  std::string kind = "empty";      // empty | slow_blocker | traffic
  int traffic_agents = 0;          // for kind == traffic
  double min_goal_cost = 60.0;
  double max_goal_cost = 250.0;
  double ego_speed_fraction = 0.5;
  std::vector<AgentSpec> agents;   // explicit placements, added for any kind
  std::uint64_t seed = 0;
  WorldConfig world;
};

ScenarioConfig load_scenario(const std::string& document);
ScenarioConfig load_scenario_file(const std::string& path);

/// Loads a builtin map by name, else a map document from disk.
std::shared_ptr<const RoadMap> resolve_map(const std::string& name_or_path);

struct SpawnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Random ego start on a real lane centreline, random reachable goal and
/// scenario agents. Everything derives from `seed`.
WorldState spawn_episode(std::shared_ptr<const RoadMap> map, const ScenarioConfig& scenario,
                         std::uint64_t seed);

/// Successor choice that follows the route, else the default successor.
SuccessorChooser route_successor(const WorldState& world);

/// Places the ego on (lane, s) aligned with the centreline.
void place_ego(WorldState& world, LaneIndex lane, double s, double v);

/// Sets the route and derives the time budget from it.
void set_route(WorldState& world, Route route);

/// Episode trace: one CSV row per step.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& out);
  void write(const WorldState& world, std::optional<Behavior> behavior);

 private:
  std::ostream* out_;
};

}  // namespace hbmp
