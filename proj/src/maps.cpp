#include "hbmp/maps.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "hbmp/geometry.hpp"
#include "json.hpp"

namespace hbmp::maps {

using nlohmann::json;

namespace {

constexpr double kWidth = 3.5;

json points_json(const std::vector<Vec2>& pts) {
  json arr = json::array();
  for (const Vec2& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

json lane_json(const std::string& id, const std::vector<Vec2>& pts, double speed,
               const std::string& left, const std::string& right,
               const std::vector<std::string>& successors,
               const std::vector<std::string>& directions = {"straight"}) {
  json j{{"id", id},          {"centerline", points_json(pts)}, {"width", kWidth},
         {"speed_limit", speed}, {"successors", successors},      {"directions", directions}};
  j["left"] = left.empty() ? json(nullptr) : json(left);
  j["right"] = right.empty() ? json(nullptr) : json(right);
  return j;
}

}  // namespace

std::string straight_road(int lanes, double length, double speed_limit) {
  json doc{{"lanes", json::array()}, {"lights", json::array()}, {"intersections", json::array()}};
  for (int i = 0; i < lanes; ++i) {
    const double y = kWidth * i;
    doc["lanes"].push_back(lane_json("r" + std::to_string(i), {{0.0, y}, {length, y}}, speed_limit,
                                     i + 1 < lanes ? "r" + std::to_string(i + 1) : "",
                                     i > 0 ? "r" + std::to_string(i - 1) : "", {}));
  }
  return doc.dump();
}

std::string two_lane_loop(double straight, double radius, double speed_limit) {
  json doc{{"lanes", json::array()}, {"lights", json::array()}, {"intersections", json::array()}};
  const std::vector<std::string> names{"s", "e", "n", "w"};
  for (int ring = 0; ring < 2; ++ring) {
    const double r = radius + kWidth * ring;
    const std::string prefix = ring == 0 ? "in_" : "out_";
    const std::string other = ring == 0 ? "out_" : "in_";
    const Vec2 sw{0.0, -r}, se{straight, -r}, ne{straight, r}, nw{0.0, r};
    std::vector<std::vector<Vec2>> pieces(4);
    pieces[0] = {sw, se};
    pieces[1] = {se};
    append_arc(pieces[1], {straight, 0.0}, r, -std::numbers::pi / 2, std::numbers::pi / 2, 0.5);
    pieces[1].back() = ne;
    pieces[2] = {ne, nw};
    pieces[3] = {nw};
    append_arc(pieces[3], {0.0, 0.0}, r, std::numbers::pi / 2, 3 * std::numbers::pi / 2, 0.5);
    pieces[3].back() = sw;
    for (int k = 0; k < 4; ++k) {
      const std::string id = prefix + names[k];
      const std::string nbr = other + names[k];
      doc["lanes"].push_back(lane_json(id, pieces[k], speed_limit, ring == 1 ? nbr : "",
                                       ring == 0 ? nbr : "", {prefix + names[(k + 1) % 4]}));
    }
  }
  return doc.dump();
}

std::string arc_road(int lanes, double radius, double sweep, double speed_limit) {
  json doc{{"lanes", json::array()}, {"lights", json::array()}, {"intersections", json::array()}};
  // Counter-clockwise arcs around the origin; lane 0 is the outermost (rightmost).
  for (int i = 0; i < lanes; ++i) {
    const double r = radius + kWidth * (lanes - 1 - i);
    std::vector<Vec2> pts{{r, 0.0}};
    append_arc(pts, {0.0, 0.0}, r, 0.0, sweep, 0.25);
    doc["lanes"].push_back(lane_json("a" + std::to_string(i), pts, speed_limit,
                                     i + 1 < lanes ? "a" + std::to_string(i + 1) : "",
                                     i > 0 ? "a" + std::to_string(i - 1) : "", {}));
  }
  return doc.dump();
}

std::string town(const TownOptions& o) {
  json doc{{"lanes", json::array()}, {"lights", json::array()}, {"intersections", json::array()}};
  const int k = o.lanes_per_direction;
  const double h = k * kWidth + 2.0;  // half size of the intersection box

  // A directed road runs between two endpoints; node indices are -1 for arm ends.
  struct Road {
    std::string name;
    Vec2 a, b;        // road axis endpoints (node centres or arm tips)
    int from = -1;    // node index or -1
    int to = -1;
    Vec2 dir;
  };
  auto node_id = [&](int i, int j) { return j * o.nx + i; };
  auto node_pos = [&](int n) { return Vec2{(n % o.nx) * o.block, (n / o.nx) * o.block}; };
  std::vector<Road> roads;
  auto add_pair = [&](Vec2 a, Vec2 b, int na, int nb, const std::string& tag) {
    const Vec2 d = (1.0 / norm(b - a)) * (b - a);
    roads.push_back({tag + "f", a, b, na, nb, d});
    roads.push_back({tag + "b", b, a, nb, na, -1.0 * d});
  };
  for (int j = 0; j < o.ny; ++j) {
    for (int i = 0; i < o.nx; ++i) {
      const int n = node_id(i, j);
      const std::string base = std::to_string(i) + "_" + std::to_string(j);
      if (i + 1 < o.nx) add_pair(node_pos(n), node_pos(node_id(i + 1, j)), n, node_id(i + 1, j), "h" + base);
      if (j + 1 < o.ny) add_pair(node_pos(n), node_pos(node_id(i, j + 1)), n, node_id(i, j + 1), "v" + base);
      if (o.arm_length > 0.0) {
        const auto arm_ok = [&](char side) {
          return o.arm_sides.empty() || o.arm_sides.find(side) != std::string::npos;
        };
        const Vec2 c = node_pos(n);
        const double L = o.arm_length + h;
        if (i == 0 && arm_ok('W')) add_pair(c, c + Vec2{-L, 0.0}, n, -1, "aW" + base);
        if (i + 1 == o.nx && arm_ok('E')) add_pair(c, c + Vec2{L, 0.0}, n, -1, "aE" + base);
        if (j == 0 && arm_ok('S')) add_pair(c, c + Vec2{0.0, -L}, n, -1, "aS" + base);
        if (j + 1 == o.ny && arm_ok('N')) add_pair(c, c + Vec2{0.0, L}, n, -1, "aN" + base);
      }
    }
  }

  auto lane_name = [](const Road& r, int m) { return r.name + std::to_string(m); };
  auto lane_points = [&](const Road& r, int m) {
    const Vec2 right = -1.0 * left_normal(r.dir);
    const Vec2 off = ((m + 0.5) * kWidth) * right;
    const Vec2 start = r.from >= 0 ? r.a + h * r.dir : r.a;
    const Vec2 end = r.to >= 0 ? r.b - h * r.dir : r.b;
    return std::vector<Vec2>{start + off, end + off};
  };

  // Outgoing road from a node in a given direction.
  auto outgoing = [&](int node, Vec2 d) -> const Road* {
    for (const Road& r : roads) {
      if (r.from == node && dot(r.dir, d) > 0.99) return &r;
    }
    return nullptr;
  };

  std::map<int, json> approaches;
  std::map<int, std::vector<std::string>> ew_lanes, ns_lanes;
  for (const Road& r : roads) {
    for (int m = 0; m < k; ++m) {
      std::vector<std::string> dirs{"straight"};
      if (r.to >= 0) {
        const Road* exits[3] = {outgoing(r.to, left_normal(r.dir)), outgoing(r.to, r.dir),
                                outgoing(r.to, -1.0 * left_normal(r.dir))};
        const char* names[3] = {"left", "straight", "right"};
        std::vector<std::string> avail, wanted;
        for (int q = 0; q < 3; ++q) {
          if (!exits[q]) continue;
          avail.push_back(names[q]);
          const bool designed = k == 1 || (m == 0 && q < 2) || (m == k - 1 && q > 0) ||
                                (m > 0 && m < k - 1 && q == 1);
          if (designed) wanted.push_back(names[q]);
        }
        dirs = wanted.empty() ? avail : wanted;
        json ex = json::object();
        for (int q = 0; q < 3; ++q) {
          if (exits[q]) ex[names[q]] = lane_name(*exits[q], m);
        }
        approaches[r.to].push_back({{"lane", lane_name(r, m)}, {"exits", ex}});
        (std::abs(r.dir.x) > 0.5 ? ew_lanes : ns_lanes)[r.to].push_back(lane_name(r, m));
      }
      doc["lanes"].push_back(lane_json(lane_name(r, m), lane_points(r, m), o.speed_limit,
                                       m > 0 ? lane_name(r, m - 1) : "",
                                       m + 1 < k ? lane_name(r, m + 1) : "", {}, dirs));
    }
  }
  for (auto& [node, list] : approaches) {
    doc["intersections"].push_back({{"id", "x" + std::to_string(node)}, {"approaches", list}});
    const int roads_in = static_cast<int>(list.size()) / k;
    if (!o.lights || roads_in < 3) continue;
    const double offset = std::fmod(7.0 * node, 26.0);
    doc["lights"].push_back({{"id", "ew" + std::to_string(node)},
                             {"lanes", ew_lanes[node]},
                             {"offset", offset},
                             {"phases", {{{"color", "green"}, {"duration", 10.0}},
                                         {{"color", "yellow"}, {"duration", 3.0}},
                                         {{"color", "red"}, {"duration", 13.0}}}}});
    doc["lights"].push_back({{"id", "ns" + std::to_string(node)},
                             {"lanes", ns_lanes[node]},
                             {"offset", offset},
                             {"phases", {{{"color", "red"}, {"duration", 13.0}},
                                         {{"color", "green"}, {"duration", 10.0}},
                                         {{"color", "yellow"}, {"duration", 3.0}}}}});
  }
  return doc.dump();
}

std::string four_way(double arm_length) {
  TownOptions o;
  o.nx = o.ny = 1;
  o.arm_length = arm_length;
  o.lights = false;
  return town(o);
}

std::string one_turn(double arm_length) {
  TownOptions o;
  o.nx = o.ny = 1;
  o.lanes_per_direction = 2;
  o.arm_length = arm_length;
  o.arm_sides = "WN";
  o.lights = false;
  o.speed_limit = 8.0;
  return town(o);
}

std::string builtin(const std::string& name) {
  if (name == "straight") return straight_road();
  if (name == "loop") return two_lane_loop();
  if (name == "arc") return arc_road();
  if (name == "four_way") return four_way();
  if (name == "one_turn") return one_turn();
  if (name == "town") {
    TownOptions o;
    o.lanes_per_direction = 2;
    return town(o);
  }
  if (name == "town1") return town(TownOptions{});
  throw std::invalid_argument("unknown builtin map '" + name + "'");
}

}  // namespace hbmp::maps
