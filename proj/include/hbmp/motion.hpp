#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "hbmp/behavior.hpp"
#include "hbmp/encoding.hpp"
#include "hbmp/path.hpp"
#include "hbmp/sim.hpp"

namespace hbmp {

struct PlannerConfig {
  double k_theta = 1.0;
  double k_e = 0.5;
  int horizon = 20;  // steps of WorldConfig::dt
  std::vector<double> v_offsets{-1.0, 0.0, 1.0};
  std::vector<double> omega_offsets{-0.4, -0.2, 0.0, 0.2, 0.4};

  double w_v = 1.0;
  double w_d = 1.0;
  double w_o = 2.0;
  double kappa_w = 0.5;
  double d_safe_lon = 5.0;
  double d_safe_lat = 1.5;

  double done_e = 0.3;
  double done_theta = 0.1;
  double min_hold = 0.5;  // seconds before completion is checked
  double timeout = 1.0;

  GridFrame frame = GridFrame::kLaneCurvilinear;
  GridConfig grid;
};

/// Keeps `requested` unless it conflicts with the road profile.
Behavior resolve_behavior(Behavior requested, const RoadProfile& profile);

struct VelocityPlan {
  double v_ref = 0.0;
  std::vector<double> profile;  // one entry per planner step
};

/// Target speed for a behavior and a linear ramp towards it at a_max.
VelocityPlan reference_velocity(Behavior b, double current_v, double speed_limit, double a_max,
                                double dt, int horizon);

struct TrackingCommand {
  double omega = 0.0;
  bool singular = false;  // |kappa * e| >= 1
};

/// Curvilinear tracking law around a reference lane, clamped to omega_max.
TrackingCommand tracking_omega(double v, const CurvilinearPose& pose, double k_theta, double k_e,
                               double omega_max);

struct TrajectorySample {
  std::vector<double> v;
  std::vector<double> omega;
  std::vector<Pose2> poses;  // pose after each step
  double v_offset = 0.0;
  double omega_offset = 0.0;

  [[nodiscard]] int horizon() const { return static_cast<int>(v.size()); }
};

struct CostBreakdown {
  double c_velocity = 0.0;
  double c_dist = 0.0;
  double c_obs = 0.0;
  double c_total = 0.0;
  double w_v = 1.0;
  double w_d = 1.0;
  double w_o = 2.0;
  double kappa_w = 0.5;
};

/// Lane the behavior converges to; nullopt when the neighbour is missing.
std::optional<LaneIndex> target_lane(const WorldState& world, Behavior b);

/// Reference path along the target lane, long enough for one behavior.
ReferencePath reference_path(const WorldState& world, LaneIndex target);

/// Ego pose relative to a reference path.
CurvilinearPose relative_pose(const ReferencePath& ref, const Pose2& p, std::size_t* hint);

/// One sample per (v offset, omega offset) pair: the offsets perturb the
/// first step only, after which the ramp and the tracking law take over.
std::vector<TrajectorySample> span_samples(const VehicleState& ego, const ReferencePath& ref,
                                           const VelocityPlan& plan, const PlannerConfig& cfg,
                                           const VehicleLimits& limits, double v_max, double dt);

/// Occupied agent cells of a grid, seen from sample poses.
class ObstacleField {
 public:
  ObstacleField(const OccupancyGrid& grid, GridMapper mapper, double length, double width);
  ObstacleField(std::vector<Vec2> cells, double res_lon, double res_lat, GridMapper mapper,
                double length, double width);

  /// Clearance ahead in the ego's lateral band and beside it in its
  /// longitudinal band; infinity when nothing is there.
  [[nodiscard]] std::pair<double, double> clearances(const Pose2& world_pose) const;
  [[nodiscard]] bool collides(const Pose2& world_pose) const;
  [[nodiscard]] bool empty() const { return cells_.empty(); }

 private:
  std::vector<Vec2> cells_;  // (lon, lat) centres
  double res_lon_, res_lat_;
  GridMapper mapper_;
  double length_, width_;
};

/// Per-step obstacle penalty of a sample.
std::vector<double> obstacle_terms(const TrajectorySample& s, const ObstacleField& field,
                                   const PlannerConfig& cfg);

CostBreakdown evaluate_cost(const TrajectorySample& s, double v_ref, const ObstacleField& field,
                            const PlannerConfig& cfg);

/// Cost of a velocity sequence with given per-step obstacle penalties.
CostBreakdown cost_of(const std::vector<double>& v, double v_ref,
                      const std::vector<double>& obs_terms, const PlannerConfig& cfg);

/// Argmin of c_total over unpruned samples; ties go to the smaller omega
/// offset magnitude, then the smaller index.
std::optional<std::size_t> select_sample(const std::vector<CostBreakdown>& costs,
                                         const std::vector<bool>& pruned,
                                         const std::vector<TrajectorySample>& samples);

/// Everything the planner looked at in one replanning step.
struct PlanStep {
  double time = 0.0;
  Behavior behavior = Behavior::kKeep;
  double v_ref = 0.0;
  std::vector<TrajectorySample> samples;
  std::vector<CostBreakdown> costs;
  std::vector<bool> pruned;
  std::optional<std::size_t> chosen;  // nullopt: emergency stop
};

/// Spans, scores and selects samples for `resolved` from the current state
/// without moving anything. `ref` is the target-lane path; `v_ref` the
/// behavior's reference speed.
PlanStep plan_once(const WorldState& world, Behavior resolved, const ReferencePath& ref,
                   double v_ref, const PlannerConfig& cfg, std::vector<double>* first_obs = nullptr);

/// Stop trajectory at -a_max with its cost, used when every sample is pruned.
std::pair<TrajectorySample, CostBreakdown> emergency_stop(const WorldState& world,
                                                          const ReferencePath& ref,
                                                          const PlannerConfig& cfg);

struct PlannerHooks {
  std::function<void(const WorldState&, const PlanStep&)> on_plan;
  std::function<void(const WorldState&)> on_step;  // after each dyn_step
};

struct ExecutedBehavior {
  Behavior requested = Behavior::kKeep;
  Behavior resolved = Behavior::kKeep;
  std::vector<double> v;
  std::vector<double> omega;
  std::vector<Pose2> poses;
  CostBreakdown cost;
  double duration = 0.0;
  bool converged = false;  // thresholds met
  bool timed_out = false;
  bool emergency = false;
};

/// Runs an already resolved behavior in the dynamics world until it
/// completes, times out, stops in an emergency, or the episode ends.
ExecutedBehavior select_and_execute(Behavior resolved, WorldState& world,
                                    const PlannerConfig& cfg, const PlannerHooks* hooks = nullptr);

/// Resolves against the current road profile, then executes.
ExecutedBehavior execute_behavior(Behavior requested, WorldState& world, const PlannerConfig& cfg,
                                  const PlannerHooks* hooks = nullptr);

/// CSV dump of every sample and its cost terms, one row per sample.
class SampleCsvWriter {
 public:
  explicit SampleCsvWriter(std::ostream& out);
  void write(const PlanStep& step);

 private:
  std::ostream* out_;
  long decision_ = 0;
};

}  // namespace hbmp
