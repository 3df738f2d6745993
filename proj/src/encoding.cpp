#include "hbmp/encoding.hpp"

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <numbers>

namespace hbmp {

const char* to_string(GridFrame f) {
  return f == GridFrame::kVehicleCentric ? "vehicle_centric" : "lane_curvilinear";
}

int GridConfig::rows() const {
  return static_cast<int>(std::lround((lon_max - lon_min) / res_lon));
}
int GridConfig::cols() const {
  return static_cast<int>(std::lround((lat_max - lat_min) / res_lat));
}
long GridConfig::row_of(double lon) const {
  return static_cast<long>(std::floor((lon - lon_min) / res_lon));
}
long GridConfig::col_of(double lat) const {
  return static_cast<long>(std::floor((lat - lat_min) / res_lat));
}

std::size_t OccupancyGrid::occupied() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
}

FootprintLattice::FootprintLattice(const Footprint& f, double pitch) : footprint(f) {
  nx = std::max(1, static_cast<int>(std::ceil(f.length / pitch - 1e-9)));
  ny = std::max(1, static_cast<int>(std::ceil(f.width / pitch - 1e-9)));
  const Vec2 u = unit_from_heading(f.pose.psi);
  const Vec2 v = left_normal(u);
  origin_ = Vec2{f.pose.x, f.pose.y} + (-0.5 * f.length) * u + (-0.5 * f.width) * v;
  du_ = (f.length / nx) * u;
  dv_ = (f.width / ny) * v;
}

Vec2 FootprintLattice::point(int i, int j) const {
  return origin_ + static_cast<double>(i) * du_ + static_cast<double>(j) * dv_;
}

ReferencePath grid_path(const WorldState& w, const GridConfig& g) {
  return ReferencePath::build(w.road(), w.ego_lane, w.ego_s, -g.lon_min + 1.0, g.lon_max + 1.0,
                              route_successor(w));
}

namespace {

// Per-row column spans of traced boundary points; rows outside the grid are
// dropped, columns are clipped only when filling.
class SpanFill {
 public:
  explicit SpanFill(int rows) : lo_(rows, LONG_MAX), hi_(rows, LONG_MIN) {}
  void add(long r, long c) {
    if (r < 0 || r >= static_cast<long>(lo_.size())) return;
    lo_[r] = std::min(lo_[r], c);
    hi_[r] = std::max(hi_[r], c);
  }
  void fill(std::vector<std::uint8_t>& layer, int cols) const {
    for (std::size_t r = 0; r < lo_.size(); ++r) {
      if (lo_[r] > hi_[r]) continue;
      const long a = std::max(0L, lo_[r]);
      const long b = std::min(static_cast<long>(cols) - 1, hi_[r]);
      for (long c = a; c <= b; ++c) layer[r * cols + c] = 1;
    }
  }

 private:
  std::vector<long> lo_, hi_;
};

// Walks the lattice boundary once, counter-clockwise.
template <typename F>
void trace_boundary(const FootprintLattice& lat, F&& visit) {
  for (int i = 0; i < lat.nx; ++i) visit(lat.point(i, 0));
  for (int j = 0; j < lat.ny; ++j) visit(lat.point(lat.nx, j));
  for (int i = lat.nx; i > 0; --i) visit(lat.point(i, lat.ny));
  for (int j = lat.ny; j > 0; --j) visit(lat.point(0, j));
}

constexpr double kCullRadius = 40.0;

bool near_ego(const WorldState& w, const VehicleState& a) {
  return std::hypot(a.x - w.ego.x, a.y - w.ego.y) <= kCullRadius;
}

void agents_vehicle_centric(const WorldState& w, OccupancyGrid& g) {
  const GridConfig& cfg = g.config;
  const double c = std::cos(w.ego.psi), s = std::sin(w.ego.psi);
  for (const auto& a : w.agents) {
    if (!near_ego(w, a.state)) continue;
    SpanFill spans(g.rows());
    trace_boundary(FootprintLattice(a.state.footprint()), [&](Vec2 p) {
      const double dx = p.x - w.ego.x, dy = p.y - w.ego.y;
      spans.add(cfg.row_of(c * dx + s * dy), cfg.col_of(-s * dx + c * dy));
    });
    spans.fill(g.agents, g.cols());
  }
}

void offroad_vehicle_centric(const WorldState& w, OccupancyGrid& g) {
  const GridConfig& cfg = g.config;
  const int rows = g.rows(), cols = g.cols();
  const double c = std::cos(w.ego.psi), s = std::sin(w.ego.psi);
  auto drivable = [&](double lon, double lat) {
    return w.road().drivable({w.ego.x + c * lon - s * lat, w.ego.y + s * lon + c * lat});
  };
  std::vector<std::uint8_t> corner((rows + 1) * (cols + 1));
  for (int r = 0; r <= rows; ++r) {
    for (int k = 0; k <= cols; ++k) {
      corner[r * (cols + 1) + k] =
          drivable(cfg.lon_min + r * cfg.res_lon, cfg.lat_min + k * cfg.res_lat);
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) {
      const bool ok = corner[r * (cols + 1) + k] && corner[r * (cols + 1) + k + 1] &&
                      corner[(r + 1) * (cols + 1) + k] && corner[(r + 1) * (cols + 1) + k + 1] &&
                      drivable(cfg.lon_min + (r + 0.5) * cfg.res_lon,
                               cfg.lat_min + (k + 0.5) * cfg.res_lat);
      g.offroad[r * cols + k] = ok ? 0 : 1;
    }
  }
}

// Row spans from a boundary walk are exact where the projection is
// continuous over the walked region. Two things break that: past either end
// of the path the sign of e flips across the extension ray, and inside a
// tight bend two stretches of the path compete for the nearest point.
// Lattice tiles that may contain either are split, down to single points.
class CurvilinearRaster {
 public:
  CurvilinearRaster(const ReferencePath& path, const FootprintLattice& lat,
                    std::vector<std::size_t> near, OccupancyGrid& g)
      : path_(path), line_(path.line()), lat_(lat), near_(std::move(near)), g_(g) {}

  void run() { tile(0, lat_.nx, 0, lat_.ny); }

 private:
  static constexpr int kBruteForceSide = 8;

  void mark(Vec2 p, SpanFill* spans) {
    const auto pr = line_.project_among(p, near_);
    const long r = g_.config.row_of(pr.s - path_.anchor_s());
    const long k = g_.config.col_of(pr.e);
    if (spans) {
      spans->add(r, k);
    } else if (r >= 0 && r < g_.rows() && k >= 0 && k < g_.cols()) {
      g_.agents[r * g_.cols() + k] = 1;
    }
  }

  void tile(int i0, int i1, int j0, int j1) {
    const Tile t = shape(i0, i1, j0, j1);
    // |e| is the distance to the path, so a tile this far out misses the grid.
    const double half_width = std::max(-g_.config.lat_min, g_.config.lat_max);
    if (t.distance - t.radius > half_width + 1e-9) return;
    if (continuous(t)) {
      SpanFill spans(g_.rows());
      if (i0 == i1 || j0 == j1) {
        for (int i = i0; i <= i1; ++i) {
          for (int j = j0; j <= j1; ++j) mark(lat_.point(i, j), &spans);
        }
      } else {
        for (int i = i0; i < i1; ++i) mark(lat_.point(i, j0), &spans);
        for (int j = j0; j < j1; ++j) mark(lat_.point(i1, j), &spans);
        for (int i = i1; i > i0; --i) mark(lat_.point(i, j1), &spans);
        for (int j = j1; j > j0; --j) mark(lat_.point(i0, j), &spans);
      }
      spans.fill(g_.agents, g_.cols());
      return;
    }
    if (i1 - i0 < kBruteForceSide && j1 - j0 < kBruteForceSide) {
      for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) mark(lat_.point(i, j), nullptr);
      }
      return;
    }
    if (i1 - i0 >= j1 - j0) {
      const int m = (i0 + i1) / 2;
      tile(i0, m, j0, j1);
      tile(m + 1, i1, j0, j1);
    } else {
      const int m = (j0 + j1) / 2;
      tile(i0, i1, j0, m);
      tile(i0, i1, m + 1, j1);
    }
  }

  struct Tile {
    std::array<Vec2, 4> corners;
    Vec2 centre;
    double radius = 0.0;
    double distance = 0.0;  // from the centre to the path
  };

  Tile shape(int i0, int i1, int j0, int j1) const {
    Tile t;
    t.corners = {lat_.point(i0, j0), lat_.point(i1, j0), lat_.point(i1, j1), lat_.point(i0, j1)};
    t.centre = 0.5 * (t.corners[0] + t.corners[2]);
    t.radius = 0.5 * norm(t.corners[2] - t.corners[0]);
    t.distance = line_.project_among(t.centre, near_).distance;
    return t;
  }

  bool continuous(const Tile& t) const {
    const auto pts = line_.points();
    const Vec2 first = pts[1] - pts[0];
    const Vec2 last = pts.back() - pts[pts.size() - 2];
    if (touches_ray(t.corners, pts.back(), last) ||
        touches_ray(t.corners, pts.front(), -1.0 * first)) {
      return false;
    }
    std::size_t lo = SIZE_MAX, hi = 0, count = 0;
    for (std::size_t i : near_) {
      if (line_.project_onto_segment(t.centre, i).distance > t.distance + 2.0 * t.radius + 1e-9) {
        continue;
      }
      lo = std::min(lo, i);
      hi = std::max(hi, i);
      ++count;
    }
    if (count != hi - lo + 1) return false;
    // Segments lo and hi may only compete through the ones between them
    // while each of those keeps a share of the tile's side at this reach.
    // A segment of length L between turns a and b towards that side loses
    // its share beyond reach h once h (tan(a/2) + tan(b/2)) >= L.
    const double reach = t.distance + t.radius;
    for (std::size_t k = lo + 1; k < hi; ++k) {
      const Vec2 in = pts[k] - pts[k - 1], seg = pts[k + 1] - pts[k], out = pts[k + 2] - pts[k + 1];
      bool left = false, right = false;
      for (Vec2 c : t.corners) {
        const double side = cross(seg, c - pts[k]);
        left = left || side >= 0.0;
        right = right || side <= 0.0;
      }
      const double ta = std::atan2(cross(in, seg), dot(in, seg));
      const double tb = std::atan2(cross(seg, out), dot(seg, out));
      auto squeeze = [&](double sign) {
        const double a = std::max(0.0, sign * ta), b = std::max(0.0, sign * tb);
        if (a >= 0.5 * std::numbers::pi || b >= 0.5 * M_PI) return true;
        return reach * (std::tan(0.5 * a) + std::tan(0.5 * b)) >= norm(seg);
      };
      if ((left && squeeze(1.0)) || (right && squeeze(-1.0))) return false;
    }
    return true;
  }

  // Whether the rectangle reaches the ray from `o` along `dir`.
  static bool touches_ray(const std::array<Vec2, 4>& c, Vec2 o, Vec2 dir) {
    bool ahead = false, left = false, right = false;
    for (Vec2 p : c) {
      ahead = ahead || dot(p - o, dir) >= 0.0;
      const double side = cross(dir, p - o);
      left = left || side >= 0.0;
      right = right || side <= 0.0;
    }
    return ahead && left && right;
  }

  const ReferencePath& path_;
  const Polyline& line_;
  const FootprintLattice& lat_;
  std::vector<std::size_t> near_;
  OccupancyGrid& g_;
};

void agents_curvilinear(const WorldState& w, const ReferencePath& path, OccupancyGrid& g) {
  for (const auto& a : w.agents) {
    if (!near_ego(w, a.state)) continue;
    const double radius = 0.5 * std::hypot(a.state.length, a.state.width);
    const FootprintLattice lat(a.state.footprint());
    CurvilinearRaster(path, lat, path.line().candidate_segments({a.state.x, a.state.y}, radius), g)
        .run();
  }
}

void offroad_curvilinear(const ReferencePath& path, OccupancyGrid& g) {
  const GridConfig& cfg = g.config;
  for (int r = 0; r < g.rows(); ++r) {
    const double s0 = path.anchor_s() + cfg.lon_min + r * cfg.res_lon;
    const auto ext = path.extents_over(s0, s0 + cfg.res_lon);
    for (int k = 0; k < g.cols(); ++k) {
      const double e0 = cfg.lat_min + k * cfg.res_lat;
      const double e1 = e0 + cfg.res_lat;
      const bool off = !ext || e1 > ext->first || e0 < -ext->second;
      g.offroad[r * g.cols() + k] = off ? 1 : 0;
    }
  }
}

}  // namespace

namespace {

OccupancyGrid empty_grid(GridFrame frame, const GridConfig& config) {
  OccupancyGrid g;
  g.frame = frame;
  g.config = config;
  const std::size_t n = static_cast<std::size_t>(g.rows()) * g.cols();
  g.agents.assign(n, 0);
  g.offroad.assign(n, 0);
  return g;
}

void merge_layers(OccupancyGrid& g) {
  g.cells.resize(g.agents.size());
  for (std::size_t i = 0; i < g.cells.size(); ++i) g.cells[i] = g.agents[i] | g.offroad[i];
}

}  // namespace

OccupancyGrid build_grid_on(const WorldState& w, const ReferencePath& path,
                            const GridConfig& config) {
  if (std::abs(w.ego_e) > 2.0 * w.lane().width) {
    throw ProjectionError("ego outside the capture range of lane " + w.lane().id);
  }
  OccupancyGrid g = empty_grid(GridFrame::kLaneCurvilinear, config);
  agents_curvilinear(w, path, g);
  offroad_curvilinear(path, g);
  merge_layers(g);
  return g;
}

OccupancyGrid build_grid(const WorldState& w, GridFrame frame, const GridConfig& config) {
  if (frame == GridFrame::kLaneCurvilinear) {
    if (std::abs(w.ego_e) > 2.0 * w.lane().width) {
      throw ProjectionError("ego outside the capture range of lane " + w.lane().id);
    }
    return build_grid_on(w, grid_path(w, config), config);
  }
  OccupancyGrid g = empty_grid(frame, config);
  agents_vehicle_centric(w, g);
  offroad_vehicle_centric(w, g);
  merge_layers(g);
  return g;
}

GridMapper::GridMapper(const WorldState& w, GridFrame frame, const ReferencePath* path)
    : frame_(frame), path_(path), ego_(w.ego.pose()), hint_(path ? path->anchor_segment() : 0) {}

Pose2 GridMapper::to_grid(const Pose2& p) const {
  if (frame_ == GridFrame::kVehicleCentric) {
    const double c = std::cos(ego_.psi), s = std::sin(ego_.psi);
    const double dx = p.x - ego_.x, dy = p.y - ego_.y;
    return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(p.psi - ego_.psi)};
  }
  const auto pr = path_->line().project_from({p.x, p.y}, hint_);
  hint_ = pr.segment;
  return {pr.s - path_->anchor_s(), pr.e, wrap_angle(p.psi - path_->line().heading_at(pr.s))};
}

std::array<double, RoadProfile::kSize> RoadProfile::values() const {
  return {e_l,        e_r,        alpha_l[0], alpha_l[1], alpha_l[2], alpha_c[0],
          alpha_c[1], alpha_c[2], alpha_r[0], alpha_r[1], alpha_r[2], l_g,
          l_y,        l_r,        d_s,        delta_v};
}

const std::array<const char*, RoadProfile::kSize>& RoadProfile::names() {
  static const std::array<const char*, kSize> n{
      "e_l",        "e_r",         "alpha_l_left", "alpha_l_straight", "alpha_l_right",
      "alpha_c_left", "alpha_c_straight", "alpha_c_right", "alpha_r_left", "alpha_r_straight",
      "alpha_r_right", "l_g",      "l_y",          "l_r",              "d_s",
      "delta_v"};
  return n;
}

std::array<double, 3> direction_bits(const Lane& lane) {
  const DirectionMask m = lane.is_virtual && lane.maneuver
                              ? static_cast<DirectionMask>(*lane.maneuver)
                              : lane.directions;
  return {allows(m, Maneuver::kLeft) ? 1.0 : 0.0, allows(m, Maneuver::kStraight) ? 1.0 : 0.0,
          allows(m, Maneuver::kRight) ? 1.0 : 0.0};
}

RoadProfile build_profile(const WorldState& w) {
  const RoadMap& map = w.road();
  const Lane& l = w.lane();
  RoadProfile p;
  if (l.left) {
    p.e_l = 1.0;
    p.alpha_l = direction_bits(map.lane(*l.left));
  }
  if (l.right) {
    p.e_r = 1.0;
    p.alpha_r = direction_bits(map.lane(*l.right));
  }
  p.alpha_c = direction_bits(l);

  // Nearest stop line ahead: on this lane, or just past the intersection
  // when the ego is on a connector.
  std::optional<StopLine> stop;
  double dist = 0.0, segment = 1.0;
  if (!l.is_virtual) {
    const auto st = map.stop_line(w.ego_lane);
    if (st && w.ego_s <= st->s) {
      stop = st;
      dist = st->s - w.ego_s;
      segment = l.length();
    }
  } else if (const auto next = route_successor(w)(w.ego_lane)) {
    if (const auto st = map.stop_line(*next)) {
      stop = st;
      dist = l.length() - w.ego_s + st->s;
      segment = map.lane(*next).length();
    }
  }
  if (stop) {
    switch (light_state(map.lights()[stop->light], w.time).color) {
      case LightColor::kGreen: p.l_g = 1.0; break;
      case LightColor::kYellow: p.l_y = 1.0; break;
      case LightColor::kRed: p.l_r = 1.0; break;
    }
    p.d_s = std::clamp(dist / segment, 0.0, 1.0);
  }
  p.delta_v = w.ego.v / l.speed_limit;
  return p;
}

Observation observe(const WorldState& w, GridFrame frame, const GridConfig& config) {
  return {build_grid(w, frame, config), build_profile(w)};
}

void dump_grid(std::ostream& out, const OccupancyGrid& g) {
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) out << static_cast<int>(g.at(r, c));
    out << '\n';
  }
}

void dump_profile(std::ostream& out, const RoadProfile& p) {
  const auto& n = RoadProfile::names();
  const auto v = p.values();
  for (std::size_t i = 0; i < n.size(); ++i) out << (i ? "," : "") << n[i];
  out << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  out << '\n';
}

}  // namespace hbmp
