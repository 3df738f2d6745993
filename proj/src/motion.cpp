#include "hbmp/motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hbmp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinSpeed = 0.5;

double sinc(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

double clearance_penalty(double d, double d_safe) {
  return std::max(0.0, 1.0 - d / d_safe);
}

}  // namespace

Behavior resolve_behavior(Behavior requested, const RoadProfile& p) {
  switch (requested) {
    case Behavior::kChangeLeft:
      return p.e_l == 0.0 ? Behavior::kKeep : requested;
    case Behavior::kChangeRight:
      return p.e_r == 0.0 ? Behavior::kKeep : requested;
    case Behavior::kSpeedUp:
      return p.delta_v >= 1.0 ? Behavior::kKeep : requested;
    default:
      return requested;
  }
}

VelocityPlan reference_velocity(Behavior b, double current_v, double speed_limit, double a_max,
                                double dt, int horizon) {
  VelocityPlan plan;
  plan.v_ref = current_v;
  if (b == Behavior::kSpeedUp) {
    plan.v_ref = std::clamp(1.2 * current_v, kMinSpeed, std::max(kMinSpeed, speed_limit));
  } else if (b == Behavior::kSpeedDown) {
    plan.v_ref = std::max(kMinSpeed, 0.8 * current_v);
  }
  plan.profile.resize(horizon);
  for (int k = 0; k < horizon; ++k) {
    const double dv = a_max * dt * (k + 1);
    plan.profile[k] = plan.v_ref >= current_v ? std::min(plan.v_ref, current_v + dv)
                                              : std::max(plan.v_ref, current_v - dv);
  }
  return plan;
}

TrackingCommand tracking_omega(double v, const CurvilinearPose& p, double k_theta, double k_e,
                               double omega_max) {
  const double ke = p.kappa * p.e;
  if (std::abs(ke) >= 1.0) {
    return {p.e > 0.0 ? -omega_max : omega_max, true};
  }
  const double w = v * p.kappa * std::cos(p.theta_e) / (1.0 - ke) -
                   k_theta * std::abs(v) * p.theta_e - k_e * v * sinc(p.theta_e) * p.e;
  return {std::clamp(w, -omega_max, omega_max), false};
}

std::optional<LaneIndex> target_lane(const WorldState& w, Behavior b) {
  if (b == Behavior::kChangeLeft) return w.lane().left;
  if (b == Behavior::kChangeRight) return w.lane().right;
  return w.ego_lane;
}

ReferencePath reference_path(const WorldState& w, LaneIndex target) {
  const CurvilinearPose cp = project(w.road(), target, w.ego.pose());
  const double ahead = 20.0 + w.v_max() * 4.0;
  return ReferencePath::build(w.road(), target, cp.s, 10.0, ahead, route_successor(w));
}

CurvilinearPose relative_pose(const ReferencePath& ref, const Pose2& p, std::size_t* hint) {
  const Polyline& line = ref.line();
  const auto pr = hint ? line.project_from({p.x, p.y}, *hint) : line.project({p.x, p.y});
  if (hint) *hint = pr.segment;
  CurvilinearPose out;
  out.lane = ref.piece_at(pr.s).lane;
  out.s = pr.s;
  out.e = pr.e;
  out.theta_e = wrap_angle(p.psi - line.heading_at(pr.s));
  out.kappa = line.curvature_at(pr.s);
  return out;
}

std::vector<TrajectorySample> span_samples(const VehicleState& ego, const ReferencePath& ref,
                                           const VelocityPlan& plan, const PlannerConfig& cfg,
                                           const VehicleLimits& lim, double v_max, double dt) {
  std::vector<TrajectorySample> out;
  out.reserve(cfg.v_offsets.size() * cfg.omega_offsets.size());
  const std::size_t hint0 = ref.line().project(Vec2{ego.x, ego.y}).segment;
  for (double dv : cfg.v_offsets) {
    for (double dw : cfg.omega_offsets) {
      TrajectorySample s;
      s.v_offset = dv;
      s.omega_offset = dw;
      Pose2 pose = ego.pose();
      double v_prev = ego.v;
      std::size_t hint = hint0;
      for (int k = 0; k < static_cast<int>(plan.profile.size()); ++k) {
        const double lo = std::max(0.0, v_prev - lim.a_max * dt);
        const double hi = std::max(lo, std::min(v_max, v_prev + lim.a_max * dt));
        const double v = std::clamp(plan.profile[k] + (k == 0 ? dv : 0.0), lo, hi);
        const CurvilinearPose cp = relative_pose(ref, pose, &hint);
        double w = tracking_omega(v, cp, cfg.k_theta, cfg.k_e, lim.omega_max).omega;
        if (k == 0) w = std::clamp(w + dw, -lim.omega_max, lim.omega_max);
        pose = integrate_unicycle(pose, v, w, dt);
        s.v.push_back(v);
        s.omega.push_back(w);
        s.poses.push_back(pose);
        v_prev = v;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

ObstacleField::ObstacleField(const OccupancyGrid& g, GridMapper mapper, double length,
                             double width)
    : res_lon_(g.config.res_lon),
      res_lat_(g.config.res_lat),
      mapper_(mapper),
      length_(length),
      width_(width) {
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      if (!g.agent_at(r, c)) continue;
      cells_.push_back({g.config.lon_min + (r + 0.5) * res_lon_,
                        g.config.lat_min + (c + 0.5) * res_lat_});
    }
  }
}

ObstacleField::ObstacleField(std::vector<Vec2> cells, double res_lon, double res_lat,
                             GridMapper mapper, double length, double width)
    : cells_(std::move(cells)),
      res_lon_(res_lon),
      res_lat_(res_lat),
      mapper_(mapper),
      length_(length),
      width_(width) {}

std::pair<double, double> ObstacleField::clearances(const Pose2& world_pose) const {
  double d_lon = kInf, d_lat = kInf;
  if (cells_.empty()) return {d_lon, d_lat};
  const Pose2 p = mapper_.to_grid(world_pose);
  const double half_l = 0.5 * length_, half_w = 0.5 * width_;
  for (const Vec2& c : cells_) {
    const double dlon = c.x - p.x, dlat = c.y - p.y;
    if (std::abs(dlat) <= half_w + 0.5 * res_lat_ && dlon > 0.0) {
      d_lon = std::min(d_lon, std::max(0.0, dlon - 0.5 * res_lon_ - half_l));
    }
    if (std::abs(dlon) <= half_l + 0.5 * res_lon_) {
      d_lat = std::min(d_lat, std::max(0.0, std::abs(dlat) - 0.5 * res_lat_ - half_w));
    }
  }
  return {d_lon, d_lat};
}

bool ObstacleField::collides(const Pose2& world_pose) const {
  if (cells_.empty()) return false;
  const Pose2 p = mapper_.to_grid(world_pose);
  const Footprint ego{p, length_, width_};
  const double reach = 0.5 * std::hypot(length_, width_) + std::hypot(res_lon_, res_lat_);
  for (const Vec2& c : cells_) {
    if (std::abs(c.x - p.x) > reach || std::abs(c.y - p.y) > reach) continue;
    if (footprints_overlap(ego, Footprint{{c.x, c.y, 0.0}, res_lon_, res_lat_})) return true;
  }
  return false;
}

std::vector<double> obstacle_terms(const TrajectorySample& s, const ObstacleField& field,
                                   const PlannerConfig& cfg) {
  std::vector<double> out(s.poses.size(), 0.0);
  if (field.empty()) return out;
  for (std::size_t t = 0; t < s.poses.size(); ++t) {
    const auto [d_lon, d_lat] = field.clearances(s.poses[t]);
    out[t] = clearance_penalty(d_lon, cfg.d_safe_lon) +
             cfg.kappa_w * clearance_penalty(d_lat, cfg.d_safe_lat);
  }
  return out;
}

CostBreakdown cost_of(const std::vector<double>& v, double v_ref,
                      const std::vector<double>& obs_terms, const PlannerConfig& cfg) {
  CostBreakdown c;
  c.w_v = cfg.w_v;
  c.w_d = cfg.w_d;
  c.w_o = cfg.w_o;
  c.kappa_w = cfg.kappa_w;
  double num = 0.0, den = 0.0, dist = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = static_cast<double>(i + 1);
    num += t * t * std::abs(v_ref - v[i]);
    den += t * t;
    dist += std::abs(v[i]);
  }
  c.c_velocity = den > 0.0 ? num / den : 0.0;
  c.c_dist = 1.0 / (1.0 + dist);
  for (double o : obs_terms) c.c_obs += o;
  c.c_total = c.w_v * c.c_velocity + c.w_d * c.c_dist + c.w_o * c.c_obs;
  return c;
}

CostBreakdown evaluate_cost(const TrajectorySample& s, double v_ref, const ObstacleField& field,
                            const PlannerConfig& cfg) {
  return cost_of(s.v, v_ref, obstacle_terms(s, field, cfg), cfg);
}

std::optional<std::size_t> select_sample(const std::vector<CostBreakdown>& costs,
                                         const std::vector<bool>& pruned,
                                         const std::vector<TrajectorySample>& samples) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (pruned[i]) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double a = costs[i].c_total, b = costs[*best].c_total;
    if (a < b || (a == b && std::abs(samples[i].omega_offset) <
                                std::abs(samples[*best].omega_offset))) {
      best = i;
    }
  }
  return best;
}

namespace {

// Grid and the path it was built on, falling back to the vehicle-centric
// frame when the ego is outside its lane's capture range.
struct PlanningGrid {
  std::optional<ReferencePath> path;
  OccupancyGrid grid;
  GridFrame frame;
};

PlanningGrid planning_grid(const WorldState& w, const PlannerConfig& cfg) {
  PlanningGrid pg;
  if (cfg.frame == GridFrame::kLaneCurvilinear) {
    try {
      pg.path = grid_path(w, cfg.grid);
      pg.grid = build_grid_on(w, *pg.path, cfg.grid);
      pg.frame = GridFrame::kLaneCurvilinear;
      return pg;
    } catch (const ProjectionError&) {
      pg.path.reset();
    }
  }
  pg.grid = build_grid(w, GridFrame::kVehicleCentric, cfg.grid);
  pg.frame = GridFrame::kVehicleCentric;
  return pg;
}

TrajectorySample stop_sample(const WorldState& w, const ReferencePath& ref,
                             const PlannerConfig& cfg) {
  VelocityPlan stop;
  stop.v_ref = 0.0;
  for (int k = 0; k < cfg.horizon; ++k) {
    stop.profile.push_back(std::max(0.0, w.ego.v - w.config.limits.a_max * w.config.dt * (k + 1)));
  }
  PlannerConfig one = cfg;
  one.v_offsets = {0.0};
  one.omega_offsets = {0.0};
  return span_samples(w.ego, ref, stop, one, w.config.limits, w.v_max(), w.config.dt).front();
}

double stop_first_obs(const WorldState& w, const TrajectorySample& s, const PlannerConfig& cfg) {
  const PlanningGrid pg = planning_grid(w, cfg);
  const GridMapper mapper(w, pg.frame, pg.path ? &*pg.path : nullptr);
  const ObstacleField field(pg.grid, mapper, w.ego.length, w.ego.width);
  return obstacle_terms(s, field, cfg).front();
}

}  // namespace

PlanStep plan_once(const WorldState& w, Behavior resolved, const ReferencePath& ref, double v_ref,
                   const PlannerConfig& cfg, std::vector<double>* first_obs) {
  const double dt = w.config.dt;
  const PlanningGrid pg = planning_grid(w, cfg);
  const GridMapper mapper(w, pg.frame, pg.path ? &*pg.path : nullptr);
  const ObstacleField field(pg.grid, mapper, w.ego.length, w.ego.width);

  VelocityPlan plan;
  plan.v_ref = v_ref;
  for (int k = 0; k < cfg.horizon; ++k) {
    const double dv = w.config.limits.a_max * dt * (k + 1);
    plan.profile.push_back(v_ref >= w.ego.v ? std::min(v_ref, w.ego.v + dv)
                                            : std::max(v_ref, w.ego.v - dv));
  }
  PlanStep step;
  step.time = w.time;
  step.behavior = resolved;
  step.v_ref = v_ref;
  step.samples = span_samples(w.ego, ref, plan, cfg, w.config.limits, w.v_max(), dt);
  if (first_obs) first_obs->clear();
  for (const TrajectorySample& s : step.samples) {
    bool hit = false;
    for (const Pose2& p : s.poses) {
      if (field.collides(p)) {
        hit = true;
        break;
      }
    }
    const std::vector<double> obs = obstacle_terms(s, field, cfg);
    if (first_obs) first_obs->push_back(obs.front());
    step.costs.push_back(cost_of(s.v, v_ref, obs, cfg));
    step.pruned.push_back(hit);
  }
  step.chosen = select_sample(step.costs, step.pruned, step.samples);
  return step;
}

std::pair<TrajectorySample, CostBreakdown> emergency_stop(const WorldState& w,
                                                          const ReferencePath& ref,
                                                          const PlannerConfig& cfg) {
  TrajectorySample s = stop_sample(w, ref, cfg);
  const PlanningGrid pg = planning_grid(w, cfg);
  const GridMapper mapper(w, pg.frame, pg.path ? &*pg.path : nullptr);
  const ObstacleField field(pg.grid, mapper, w.ego.length, w.ego.width);
  CostBreakdown c = evaluate_cost(s, 0.0, field, cfg);
  return {std::move(s), c};
}

ExecutedBehavior select_and_execute(Behavior resolved, WorldState& w, const PlannerConfig& cfg,
                                    const PlannerHooks* hooks) {
  ExecutedBehavior ex;
  ex.requested = resolved;
  ex.resolved = resolved;
  if (w.status.terminal()) return ex;

  const LaneIndex target = target_lane(w, resolved).value_or(w.ego_lane);
  const ReferencePath ref = reference_path(w, target);
  const double dt = w.config.dt;
  const VelocityPlan initial = reference_velocity(resolved, w.ego.v, w.speed_limit(),
                                                  w.config.limits.a_max, dt, cfg.horizon);
  const double v_ref = initial.v_ref;
  std::vector<double> obs_executed;
  const double t0 = w.time;

  while (!w.status.terminal()) {
    std::vector<double> first_obs;
    const PlanStep step = plan_once(w, resolved, ref, v_ref, cfg, &first_obs);
    TrajectorySample chosen;
    double obs_now = 0.0;
    if (step.chosen) {
      chosen = step.samples[*step.chosen];
      obs_now = first_obs[*step.chosen];
    } else {
      const auto stop = emergency_stop(w, ref, cfg);
      chosen = stop.first;
      obs_now = stop_first_obs(w, stop.first, cfg);
      ex.emergency = true;
    }
    if (hooks && hooks->on_plan) hooks->on_plan(w, step);

    dyn_step(w, chosen.v.front(), chosen.omega.front());
    if (hooks && hooks->on_step) hooks->on_step(w);
    ex.v.push_back(w.ego.v);
    ex.omega.push_back(w.ego.omega);
    ex.poses.push_back(w.ego.pose());
    obs_executed.push_back(obs_now);

    if (ex.emergency) break;
    const double elapsed = w.time - t0;
    if (elapsed + 1e-9 >= cfg.min_hold) {
      const CurvilinearPose cp = relative_pose(ref, w.ego.pose(), nullptr);
      if (std::abs(cp.e) < cfg.done_e && std::abs(cp.theta_e) < cfg.done_theta) {
        ex.converged = true;
        break;
      }
    }
    if (elapsed + 1e-9 >= cfg.timeout) {
      ex.timed_out = true;
      break;
    }
  }
  ex.duration = w.time - t0;
  ex.cost = cost_of(ex.v, v_ref, obs_executed, cfg);
  return ex;
}

ExecutedBehavior execute_behavior(Behavior requested, WorldState& w, const PlannerConfig& cfg,
                                  const PlannerHooks* hooks) {
  const Behavior resolved = resolve_behavior(requested, build_profile(w));
  ExecutedBehavior ex = select_and_execute(resolved, w, cfg, hooks);
  ex.requested = requested;
  return ex;
}

SampleCsvWriter::SampleCsvWriter(std::ostream& out) : out_(&out) {
  *out_ << "decision,time,behavior,sample,v_offset,omega_offset,v0,omega0,c_velocity,c_dist,"
           "c_obs,c_total,pruned,chosen\n";
}

void SampleCsvWriter::write(const PlanStep& step) {
  for (std::size_t i = 0; i < step.samples.size(); ++i) {
    const auto& s = step.samples[i];
    const auto& c = step.costs[i];
    *out_ << decision_ << ',' << step.time << ',' << to_string(step.behavior) << ',' << i << ','
          << s.v_offset << ',' << s.omega_offset << ',' << s.v.front() << ',' << s.omega.front()
          << ',' << c.c_velocity << ',' << c.c_dist << ',' << c.c_obs << ',' << c.c_total << ','
          << (step.pruned[i] ? 1 : 0) << ',' << (step.chosen == i ? 1 : 0) << '\n';
  }
  ++decision_;
}

}  // namespace hbmp
