#include "hbmp/geometry.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

namespace hbmp {

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw std::invalid_argument("polyline needs at least two points");
  const std::size_t n = points_.size();
  cum_s_.assign(n, 0.0);
  seg_heading_.assign(n - 1, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 d = points_[i + 1] - points_[i];
    const double len = norm(d);
    if (len <= 0.0) throw std::invalid_argument("polyline has repeated consecutive points");
    cum_s_[i + 1] = cum_s_[i] + len;
    seg_heading_[i] = std::atan2(d.y, d.x);
  }

  std::vector<double> raw(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double turn = wrap_angle(seg_heading_[i] - seg_heading_[i - 1]);
    const double span = 0.5 * (cum_s_[i + 1] - cum_s_[i - 1]);
    raw[i] = turn / span;
  }
  if (n > 2) {
    raw[0] = raw[1];
    raw[n - 1] = raw[n - 2];
  }
  vertex_kappa_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(i + 1, n - 1);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) sum += raw[j];
    vertex_kappa_[i] = sum / static_cast<double>(hi - lo + 1);
  }
}

std::size_t Polyline::segment_at(double s) const {
  if (s <= 0.0) return 0;
  if (s >= length()) return segment_count() - 1;
  const auto it = std::upper_bound(cum_s_.begin(), cum_s_.end(), s);
  return static_cast<std::size_t>(std::distance(cum_s_.begin(), it)) - 1;
}

Vec2 Polyline::point_at(double s) const {
  const std::size_t i = segment_at(s);
  const double len = cum_s_[i + 1] - cum_s_[i];
  const double t = (s - cum_s_[i]) / len;
  return points_[i] + t * (points_[i + 1] - points_[i]);
}

double Polyline::heading_at(double s) const {
  const std::size_t nseg = segment_count();
  if (nseg == 1) return seg_heading_[0];
  const std::size_t i = segment_at(s);
  const double mid = 0.5 * (cum_s_[i] + cum_s_[i + 1]);
  std::size_t a = i;
  std::size_t b = i;
  if (s < mid && i > 0) a = i - 1;
  else if (s >= mid && i + 1 < nseg) b = i + 1;
  if (a == b) return seg_heading_[i];
  const double ma = 0.5 * (cum_s_[a] + cum_s_[a + 1]);
  const double mb = 0.5 * (cum_s_[b] + cum_s_[b + 1]);
  const double t = std::clamp((s - ma) / (mb - ma), 0.0, 1.0);
  return wrap_angle(seg_heading_[a] + t * wrap_angle(seg_heading_[b] - seg_heading_[a]));
}

double Polyline::curvature_at(double s) const {
  const std::size_t i = segment_at(s);
  const double len = cum_s_[i + 1] - cum_s_[i];
  const double t = std::clamp((s - cum_s_[i]) / len, 0.0, 1.0);
  return (1.0 - t) * vertex_kappa_[i] + t * vertex_kappa_[i + 1];
}

Vec2 Polyline::to_world(double s, double e) const {
  const Vec2 c = point_at(s);
  return c + e * left_normal(unit_from_heading(heading_at(s)));
}

PolylineProjection Polyline::project_onto_segment(Vec2 p, std::size_t i) const {
  const Vec2 a = points_[i];
  const Vec2 d = points_[i + 1] - a;
  const double len2 = dot(d, d);
  const double t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
  const Vec2 foot = a + t * d;
  const Vec2 r = p - foot;
  const double dist = norm(r);
  PolylineProjection out;
  out.segment = i;
  out.s = cum_s_[i] + t * (cum_s_[i + 1] - cum_s_[i]);
  out.distance = dist;
  out.e = cross(d, r) >= 0.0 ? dist : -dist;
  return out;
}

PolylineProjection Polyline::project(Vec2 p) const {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segment_count(); ++i) {
    const PolylineProjection c = project_onto_segment(p, i);
    if (c.distance < best.distance) best = c;
  }
  return best;
}

std::vector<std::size_t> Polyline::candidate_segments(Vec2 c, double radius) const {
  // A point within `radius` of c is at most d + radius from the curve, and
  // a segment farther than d + 2 radius from c is farther than that from it.
  const double limit = project(c).distance + 2.0 * radius + 1e-9;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segment_count(); ++i) {
    if (project_onto_segment(c, i).distance <= limit) out.push_back(i);
  }
  return out;
}

PolylineProjection Polyline::project_among(Vec2 p, const std::vector<std::size_t>& segments) const {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i : segments) {
    const PolylineProjection c = project_onto_segment(p, i);
    if (c.distance < best.distance) best = c;
  }
  return best;
}

PolylineProjection Polyline::project_from(Vec2 p, std::size_t hint) const {
  std::size_t i = std::min(hint, segment_count() - 1);
  PolylineProjection best = project_onto_segment(p, i);
  // Walk downhill in both directions; keep the first minimum on ties so the
  // result agrees with the exhaustive scan.
  while (i > 0) {
    const PolylineProjection c = project_onto_segment(p, i - 1);
    if (c.distance > best.distance) break;
    best = c;
    --i;
  }
  for (std::size_t j = best.segment + 1; j < segment_count(); ++j) {
    const PolylineProjection c = project_onto_segment(p, j);
    if (c.distance < best.distance) {
      best = c;
    } else if (c.distance > best.distance) {
      break;
    }
  }
  return best;
}

std::vector<Vec2> Footprint::corners() const {
  const Vec2 t = unit_from_heading(pose.psi);
  const Vec2 n = left_normal(t);
  const Vec2 c{pose.x, pose.y};
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {c + hl * t + hw * n, c - hl * t + hw * n, c - hl * t - hw * n, c + hl * t - hw * n};
}

bool footprints_overlap(const Footprint& a, const Footprint& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<double, 4> axes_h{a.pose.psi, a.pose.psi + std::numbers::pi / 2,
                                     b.pose.psi, b.pose.psi + std::numbers::pi / 2};
  for (double h : axes_h) {
    const Vec2 ax = unit_from_heading(h);
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const Vec2& p : ca) {
      const double v = dot(p, ax);
      amin = std::min(amin, v);
      amax = std::max(amax, v);
    }
    for (const Vec2& p : cb) {
      const double v = dot(p, ax);
      bmin = std::min(bmin, v);
      bmax = std::max(bmax, v);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

void append_arc(std::vector<Vec2>& pts, Vec2 center, double radius, double a0, double a1,
                double step) {
  const double sweep = a1 - a0;
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(sweep) * radius / step)));
  for (int i = 1; i <= n; ++i) {
    const double a = a0 + sweep * static_cast<double>(i) / n;
    pts.push_back(center + radius * Vec2{std::cos(a), std::sin(a)});
  }
}

}  // namespace hbmp
