#include "hbmp/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace hbmp {

using nlohmann::json;

const char* to_string(Maneuver m) {
  switch (m) {
    case Maneuver::kLeft: return "left";
    case Maneuver::kStraight: return "straight";
    case Maneuver::kRight: return "right";
  }
  return "?";
}

std::optional<Maneuver> maneuver_from_string(const std::string& s) {
  if (s == "left") return Maneuver::kLeft;
  if (s == "straight") return Maneuver::kStraight;
  if (s == "right") return Maneuver::kRight;
  return std::nullopt;
}

const char* to_string(LightColor c) {
  switch (c) {
    case LightColor::kGreen: return "green";
    case LightColor::kYellow: return "yellow";
    case LightColor::kRed: return "red";
  }
  return "?";
}

LightState light_state(const TrafficLight& light, double sim_time) {
  double cycle = 0.0;
  for (const auto& p : light.phases) cycle += p.duration;
  double tau = std::fmod(sim_time + light.offset, cycle);
  if (tau < 0.0) tau += cycle;
  for (const auto& p : light.phases) {
    if (tau < p.duration) return {p.color, tau};
    tau -= p.duration;
  }
  // fmod rounding can land exactly on the cycle length.
  return {light.phases.front().color, 0.0};
}

std::optional<LaneIndex> RoadMap::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

LaneIndex RoadMap::index_of(const std::string& id) const {
  const auto i = find(id);
  if (!i) throw MapError("unknown lane id '" + id + "'");
  return *i;
}

std::optional<StopLine> RoadMap::stop_line(LaneIndex lane) const {
  const auto it = stop_lines_.find(lane);
  if (it == stop_lines_.end()) return std::nullopt;
  return it->second;
}

std::size_t RoadMap::virtual_lane_count() const {
  return static_cast<std::size_t>(
      std::count_if(lanes_.begin(), lanes_.end(), [](const Lane& l) { return l.is_virtual; }));
}

double RoadMap::max_speed_limit() const {
  double v = 0.0;
  for (const auto& l : lanes_) v = std::max(v, l.speed_limit);
  return v;
}

bool RoadMap::drivable(Vec2 p) const {
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    const auto& [lo, hi] = lane_bounds_[i];
    if (p.x < lo.x || p.y < lo.y || p.x > hi.x || p.y > hi.y) continue;
    if (lanes_[i].centerline.project(p).distance <= 0.5 * lanes_[i].width) return true;
  }
  return false;
}

void RoadMap::index() {
  by_id_.clear();
  for (LaneIndex i = 0; i < lanes_.size(); ++i) {
    if (!by_id_.emplace(lanes_[i].id, i).second) {
      throw MapError("duplicate lane id '" + lanes_[i].id + "'");
    }
  }

  for (LaneIndex i = 0; i < lanes_.size(); ++i) {
    const Lane& l = lanes_[i];
    if (l.centerline.points().size() < 2) throw MapError("lane '" + l.id + "' has < 2 points");
    if (!(l.width > 0.0)) throw MapError("lane '" + l.id + "' has non-positive width");
    if (!(l.speed_limit > 0.0)) throw MapError("lane '" + l.id + "' has non-positive speed limit");
    if (l.left && (*l.left >= lanes_.size() || lanes_[*l.left].right != i)) {
      throw MapError("asymmetric left neighbour on lane '" + l.id + "'");
    }
    if (l.right && (*l.right >= lanes_.size() || lanes_[*l.right].left != i)) {
      throw MapError("asymmetric right neighbour on lane '" + l.id + "'");
    }
    for (LaneIndex s : l.successors) {
      if (s >= lanes_.size()) throw MapError("dangling successor on lane '" + l.id + "'");
    }
  }

  predecessors_.assign(lanes_.size(), {});
  for (LaneIndex i = 0; i < lanes_.size(); ++i) {
    for (LaneIndex s : lanes_[i].successors) predecessors_[s].push_back(i);
  }

  // Groups: union-find over neighbour links of real lanes.
  std::vector<std::size_t> parent(lanes_.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (LaneIndex i = 0; i < lanes_.size(); ++i) {
    if (lanes_[i].left) parent[root(i)] = root(*lanes_[i].left);
  }
  std::map<std::size_t, std::size_t> real_groups;
  std::size_t next = 0;
  for (LaneIndex i = 0; i < lanes_.size(); ++i) {
    if (lanes_[i].is_virtual) continue;
    const auto [it, fresh] = real_groups.emplace(root(i), next);
    if (fresh) ++next;
    lanes_[i].group = it->second;
  }
  std::map<std::tuple<std::size_t, std::size_t, int>, std::size_t> connector_groups;
  for (LaneIndex i = 0; i < lanes_.size(); ++i) {
    Lane& l = lanes_[i];
    if (!l.is_virtual) continue;
    std::size_t from = std::numeric_limits<std::size_t>::max();
    for (LaneIndex j : predecessors_[i]) {
      if (!lanes_[j].is_virtual) from = lanes_[j].group;
    }
    const std::size_t to = l.successors.empty() ? from : lanes_[l.successors.front()].group;
    const int m = l.maneuver ? static_cast<int>(*l.maneuver) : 0;
    const auto [it, fresh] = connector_groups.emplace(std::make_tuple(from, to, m), next);
    if (fresh) ++next;
    l.group = it->second;
  }
  group_count_ = next;

  stop_lines_.clear();
  for (std::size_t li = 0; li < lights_.size(); ++li) {
    const auto& light = lights_[li];
    if (light.phases.empty()) throw MapError("light '" + light.id + "' has an empty schedule");
    for (const auto& p : light.phases) {
      if (!(p.duration > 0.0)) throw MapError("light '" + light.id + "' has a non-positive phase");
    }
    for (std::size_t k = 0; k < light.lanes.size(); ++k) {
      if (light.lanes[k] >= lanes_.size()) throw MapError("light '" + light.id + "' governs unknown lane");
      stop_lines_[light.lanes[k]] = StopLine{li, light.stop_line_s[k]};
    }
  }

  lane_bounds_.clear();
  for (const auto& l : lanes_) {
    Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Vec2 hi{-lo.x, -lo.y};
    for (const Vec2& p : l.centerline.points()) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    const double pad = l.width;
    lane_bounds_.emplace_back(Vec2{lo.x - pad, lo.y - pad}, Vec2{hi.x + pad, hi.y + pad});
  }
}

RoadMap build_map(std::vector<Lane> lanes, std::vector<TrafficLight> lights) {
  RoadMap m;
  m.lanes_ = std::move(lanes);
  m.lights_ = std::move(lights);
  m.index();
  return m;
}

namespace {

Polyline connector_curve(const Polyline& from, const Polyline& to) {
  const Vec2 p0 = from.points().back();
  const Vec2 p3 = to.points().front();
  const double h0 = from.segment_heading(from.segment_count() - 1);
  const double h1 = to.segment_heading(0);
  const double chord = norm(p3 - p0);
  const double turn = std::abs(wrap_angle(h1 - h0));
  // Handle length of the cubic that best approximates a circular arc of the
  // same sweep; straight connectors degrade to chord / 3.
  double handle = chord / 3.0;
  if (turn > 1e-6) {
    const double radius = chord / (2.0 * std::sin(0.5 * turn));
    handle = 4.0 / 3.0 * std::tan(0.25 * turn) * radius;
  }
  const Vec2 p1 = p0 + handle * unit_from_heading(h0);
  const Vec2 p2 = p3 - handle * unit_from_heading(h1);
  const int n = std::max(4, static_cast<int>(std::ceil((chord + 0.5 * turn * chord) / 0.5)));
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double u = 1.0 - t;
    pts.push_back(u * u * u * p0 + 3.0 * u * u * t * p1 + 3.0 * u * t * t * p2 + t * t * t * p3);
  }
  return Polyline(std::move(pts));
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw MapError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw MapError(where + ": bad '" + key + "': " + e.what());
  }
}

LightColor color_from_string(const std::string& s) {
  if (s == "green") return LightColor::kGreen;
  if (s == "yellow") return LightColor::kYellow;
  if (s == "red") return LightColor::kRed;
  throw MapError("unknown light color '" + s + "'");
}

}  // namespace

RoadMap load_map(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw MapError(std::string("map is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("lanes") || !doc["lanes"].is_array()) {
    throw MapError("map document needs a 'lanes' array");
  }

  struct RawLane {
    std::string left, right;
    std::vector<std::string> successors;
  };
  std::vector<Lane> lanes;
  std::vector<RawLane> raw;
  std::unordered_map<std::string, LaneIndex> ids;
  for (const auto& jl : doc["lanes"]) {
    const auto id = require<std::string>(jl, "id", "lane");
    const std::string where = "lane '" + id + "'";
    Lane lane;
    lane.id = id;
    std::vector<Vec2> pts;
    for (const auto& p : require<json>(jl, "centerline", where)) {
      if (!p.is_array() || p.size() != 2) throw MapError(where + ": centerline points are [x, y]");
      pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    try {
      lane.centerline = Polyline(std::move(pts));
    } catch (const std::invalid_argument& e) {
      throw MapError(where + ": " + e.what());
    }
    lane.width = jl.value("width", 3.5);
    lane.speed_limit = jl.value("speed_limit", 10.0);
    DirectionMask mask = 0;
    for (const auto& d : jl.value("directions", std::vector<std::string>{"straight"})) {
      const auto m = maneuver_from_string(d);
      if (!m) throw MapError(where + ": unknown direction '" + d + "'");
      mask |= static_cast<DirectionMask>(*m);
    }
    lane.directions = mask;
    RawLane r;
    if (jl.contains("left") && !jl["left"].is_null()) r.left = jl["left"].get<std::string>();
    if (jl.contains("right") && !jl["right"].is_null()) r.right = jl["right"].get<std::string>();
    r.successors = jl.value("successors", std::vector<std::string>{});
    if (!ids.emplace(id, lanes.size()).second) throw MapError("duplicate lane id '" + id + "'");
    lanes.push_back(std::move(lane));
    raw.push_back(std::move(r));
  }

  auto resolve = [&](const std::string& id, const std::string& where) {
    const auto it = ids.find(id);
    if (it == ids.end()) throw MapError(where + ": dangling reference to lane '" + id + "'");
    return it->second;
  };
  for (LaneIndex i = 0; i < lanes.size(); ++i) {
    const std::string where = "lane '" + lanes[i].id + "'";
    if (!raw[i].left.empty()) lanes[i].left = resolve(raw[i].left, where);
    if (!raw[i].right.empty()) lanes[i].right = resolve(raw[i].right, where);
    for (const auto& s : raw[i].successors) lanes[i].successors.push_back(resolve(s, where));
  }

  for (const auto& jx : doc.value("intersections", json::array())) {
    const auto xid = require<std::string>(jx, "id", "intersection");
    for (const auto& ja : require<json>(jx, "approaches", "intersection '" + xid + "'")) {
      const std::string where = "intersection '" + xid + "'";
      const LaneIndex from = resolve(require<std::string>(ja, "lane", where), where);
      const json exits = require<json>(ja, "exits", where);
      for (Maneuver m : {Maneuver::kLeft, Maneuver::kStraight, Maneuver::kRight}) {
        if (!allows(lanes[from].directions, m)) continue;
        if (!exits.contains(to_string(m))) {
          throw MapError(where + ": lane '" + lanes[from].id + "' allows " + to_string(m) +
                         " but has no exit for it");
        }
        const LaneIndex to = resolve(exits[to_string(m)].get<std::string>(), where);
        Lane c;
        c.id = lanes[from].id + "->" + lanes[to].id;
        c.centerline = connector_curve(lanes[from].centerline, lanes[to].centerline);
        c.width = lanes[from].width;
        c.speed_limit = std::min(lanes[from].speed_limit, lanes[to].speed_limit);
        c.is_virtual = true;
        c.maneuver = m;
        c.successors = {to};
        const LaneIndex ci = lanes.size();
        if (!ids.emplace(c.id, ci).second) throw MapError("duplicate connector '" + c.id + "'");
        lanes.push_back(std::move(c));
        lanes[from].successors.push_back(ci);
      }
    }
  }

  std::vector<TrafficLight> lights;
  for (const auto& jl : doc.value("lights", json::array())) {
    TrafficLight light;
    light.id = require<std::string>(jl, "id", "light");
    const std::string where = "light '" + light.id + "'";
    for (const auto& id : require<std::vector<std::string>>(jl, "lanes", where)) {
      light.lanes.push_back(resolve(id, where));
    }
    if (jl.contains("stop_line_s")) {
      light.stop_line_s = jl["stop_line_s"].get<std::vector<double>>();
      if (light.stop_line_s.size() != light.lanes.size()) {
        throw MapError(where + ": stop_line_s must match lanes");
      }
    } else {
      for (LaneIndex l : light.lanes) light.stop_line_s.push_back(lanes[l].length());
    }
    for (const auto& jp : require<json>(jl, "phases", where)) {
      light.phases.push_back(
          {color_from_string(require<std::string>(jp, "color", where)),
           require<double>(jp, "duration", where)});
    }
    light.offset = jl.value("offset", 0.0);
    lights.push_back(std::move(light));
  }

  return build_map(std::move(lanes), std::move(lights));
}

RoadMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MapError("cannot open map file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_map(ss.str());
}

CurvilinearPose project(const RoadMap& map, LaneIndex lane, const Pose2& pose) {
  const Lane& l = map.lane(lane);
  const auto pr = l.centerline.project({pose.x, pose.y});
  if (std::abs(pr.e) > 2.0 * l.width) {
    throw ProjectionError("pose outside capture range of lane '" + l.id + "'");
  }
  CurvilinearPose cp;
  cp.lane = lane;
  cp.s = pr.s;
  cp.e = pr.e;
  cp.theta_e = wrap_angle(pose.psi - l.centerline.heading_at(pr.s));
  cp.kappa = l.centerline.curvature_at(pr.s);
  return cp;
}

double route_cost(const RoadMap& map, const std::vector<LaneIndex>& lanes, double start_s,
                  double goal_s) {
  const double f0 = start_s / map.lane(lanes.front()).length();
  bool in_start_segment = true;
  double cost = 0.0;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const Lane& l = map.lane(lanes[i]);
    const bool last = i + 1 == lanes.size();
    if (!last && (l.left == lanes[i + 1] || l.right == lanes[i + 1])) continue;
    const double entry = in_start_segment ? f0 * l.length() : 0.0;
    cost += (last ? goal_s : l.length()) - entry;
    in_start_segment = false;
  }
  return cost;
}

Route plan_route(const RoadMap& map, const CurvilinearPose& start, const CurvilinearPose& goal) {
  const std::size_t n = map.lanes().size();
  if (start.lane >= n || goal.lane >= n) throw RouteError("start or goal lane not on map");
  if (start.lane == goal.lane && goal.s >= start.s) {
    return Route{{start.lane}, goal.s, goal.s - start.s, 0};
  }

  // Node 2*i is lane i entered at its start; node 2*i+1 is lane i reached
  // laterally without leaving the start segment (progress fraction f0). Keys
  // are the cost at segment entry, so lateral moves are free and the segment
  // is charged once, for the lane the route leaves it by.
  const double f0 = start.s / map.lane(start.lane).length();
  const Vec2 goal_pt = map.lane(goal.lane).centerline.point_at(goal.s);
  double slack = 0.0;
  for (LaneIndex i = 0; i < n; ++i) {
    const auto& l = map.lane(i);
    double w = l.width;
    for (auto k = l.left; k; k = map.lane(*k).left) w += map.lane(*k).width;
    for (auto k = l.right; k; k = map.lane(*k).right) w += map.lane(*k).width;
    slack = std::max(slack, 2.0 * w);
  }
  // Lanes reached inside the start stretch start mid-lane, so they get no
  // estimate; elsewhere the straight line to the goal, less lateral slack.
  auto heuristic = [&](std::size_t node) {
    if (node % 2 == 1) return 0.0;
    const Lane& l = map.lane(node / 2);
    return std::max(0.0, norm(l.centerline.points().front() - goal_pt) - slack);
  };
  auto end_cost = [&](std::size_t node, double key) {
    const double len = map.lane(node / 2).length();
    return node % 2 == 1 ? len * (1.0 - f0) : key + len;
  };
  auto goal_cost = [&](std::size_t node, double key) -> std::optional<double> {
    if (node / 2 != goal.lane) return std::nullopt;
    if (node % 2 == 0) return key + goal.s;
    const double entry = f0 * map.lane(goal.lane).length();
    if (goal.s < entry) return std::nullopt;
    return goal.s - entry;
  };

  struct Key {
    double f;
    double g;
    int changes;
    std::size_t node;
    bool operator>(const Key& o) const {
      return std::tie(f, changes, node) > std::tie(o.f, o.changes, o.node);
    }
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best_g(2 * n, inf);
  std::vector<int> best_changes(2 * n, std::numeric_limits<int>::max());
  std::vector<std::size_t> parent(2 * n, 2 * n);
  std::vector<bool> closed(2 * n, false);
  std::priority_queue<Key, std::vector<Key>, std::greater<>> open;
  auto relax = [&](std::size_t from, std::size_t to, double g, int changes) {
    if (g < best_g[to] || (g == best_g[to] && changes < best_changes[to])) {
      best_g[to] = g;
      best_changes[to] = changes;
      parent[to] = from;
      open.push({g + heuristic(to), g, changes, to});
    }
  };

  const std::size_t root = 2 * start.lane + 1;
  best_g[root] = 0.0;
  best_changes[root] = 0;
  open.push({0.0, 0.0, 0, root});

  double best_cost = inf;
  int best_route_changes = std::numeric_limits<int>::max();
  std::size_t best_node = 2 * n;
  while (!open.empty()) {
    const Key k = open.top();
    open.pop();
    if (closed[k.node] || k.g != best_g[k.node] || k.changes != best_changes[k.node]) continue;
    if (k.f > best_cost) break;
    closed[k.node] = true;
    if (const auto c = goal_cost(k.node, k.g)) {
      if (*c < best_cost || (*c == best_cost && k.changes < best_route_changes)) {
        best_cost = *c;
        best_route_changes = k.changes;
        best_node = k.node;
      }
    }
    const Lane& l = map.lane(k.node / 2);
    const double out = end_cost(k.node, k.g);
    for (LaneIndex s : l.successors) relax(k.node, 2 * s, out, k.changes);
    const std::size_t cls = k.node % 2;
    if (l.left) relax(k.node, 2 * *l.left + cls, k.g, k.changes + 1);
    if (l.right) relax(k.node, 2 * *l.right + cls, k.g, k.changes + 1);
  }
  if (best_node == 2 * n) throw RouteError("goal unreachable");

  Route r;
  r.goal_s = goal.s;
  r.cost = best_cost;
  r.lane_changes = best_route_changes;
  std::vector<LaneIndex> rev;
  for (std::size_t node = best_node;; node = parent[node]) {
    rev.push_back(node / 2);
    if (node == root) break;
  }
  r.lanes.assign(rev.rbegin(), rev.rend());
  return r;
}

}  // namespace hbmp
