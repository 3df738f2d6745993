#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace hbmp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit_from_heading(double h) { return {std::cos(h), std::sin(h)}; }
inline Vec2 left_normal(Vec2 t) { return {-t.y, t.x}; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - std::numbers::pi;
}

/// Planar pose: position and heading.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

/// Result of projecting a point onto a polyline.
struct PolylineProjection {
  double s = 0.0;         // arc length of the foot point
  double e = 0.0;         // signed lateral offset, positive to the left
  std::size_t segment = 0;
  double distance = 0.0;  // |e|, kept separately for comparisons
};

/// Arc-length parameterised polyline with discrete curvature.
///
/// Curvature is estimated per vertex from the turn of consecutive segment
/// headings divided by the mean adjacent segment length, then smoothed with
/// a centred 3-point window. Heading at an arbitrary s is interpolated
/// between segment midpoints so it is continuous along the curve.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  [[nodiscard]] std::span<const Vec2> points() const { return points_; }
  [[nodiscard]] std::size_t segment_count() const { return points_.size() - 1; }
  [[nodiscard]] double length() const { return cum_s_.back(); }
  [[nodiscard]] double vertex_s(std::size_t i) const { return cum_s_[i]; }

  [[nodiscard]] Vec2 point_at(double s) const;
  [[nodiscard]] double heading_at(double s) const;
  [[nodiscard]] double curvature_at(double s) const;
  [[nodiscard]] double segment_heading(std::size_t i) const { return seg_heading_[i]; }

  /// Lane-frame (s, e) back to world coordinates.
  [[nodiscard]] Vec2 to_world(double s, double e) const;

  /// Exhaustive nearest-point projection over every segment.
  [[nodiscard]] PolylineProjection project(Vec2 p) const;
  /// Nearest-point projection by local descent from a segment hint. Matches
  /// `project` whenever the point lies inside the curve's tubular
  /// neighbourhood and the hint is in the right basin.
  [[nodiscard]] PolylineProjection project_from(Vec2 p, std::size_t hint) const;
  /// Segments that can hold the nearest point for some point within
  /// `radius` of `c`, in index order.
  [[nodiscard]] std::vector<std::size_t> candidate_segments(Vec2 c, double radius) const;
  /// `project` restricted to `segments` (ascending); equal to `project` for
  /// points covered by candidate_segments.
  [[nodiscard]] PolylineProjection project_among(Vec2 p,
                                                 const std::vector<std::size_t>& segments) const;
  /// Projection onto one segment (foot point clamped to the segment).
  [[nodiscard]] PolylineProjection project_onto_segment(Vec2 p, std::size_t i) const;

  [[nodiscard]] std::size_t segment_at(double s) const;

 private:
  std::vector<Vec2> points_;
  std::vector<double> cum_s_;
  std::vector<double> seg_heading_;
  std::vector<double> vertex_kappa_;
};

/// Oriented rectangle footprint centred on a pose.
struct Footprint {
  Pose2 pose;
  double length = 0.0;
  double width = 0.0;

  [[nodiscard]] std::vector<Vec2> corners() const;
};

/// Separating-axis overlap test for two oriented rectangles (closed sets).
bool footprints_overlap(const Footprint& a, const Footprint& b);

/// Appends a circular arc as a polyline (excluding the start point).
void append_arc(std::vector<Vec2>& pts, Vec2 center, double radius, double a0,
                double a1, double step);

}  // namespace hbmp
