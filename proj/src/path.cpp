#include "hbmp/path.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <tuple>

namespace hbmp {

std::optional<LaneIndex> default_successor(const RoadMap& map, LaneIndex lane) {
  const auto& succ = map.lane(lane).successors;
  if (succ.empty()) return std::nullopt;
  for (LaneIndex s : succ) {
    const Lane& l = map.lane(s);
    if (!l.is_virtual || l.maneuver == Maneuver::kStraight) return s;
  }
  return succ.front();
}

std::pair<double, double> road_extents(const RoadMap& map, LaneIndex lane) {
  const Lane& l = map.lane(lane);
  double left = 0.5 * l.width;
  double right = 0.5 * l.width;
  for (auto n = l.left; n; n = map.lane(*n).left) left += map.lane(*n).width;
  for (auto n = l.right; n; n = map.lane(*n).right) right += map.lane(*n).width;
  return {left, right};
}

ReferencePath ReferencePath::build(const RoadMap& map, LaneIndex lane, double s, double behind,
                                   double ahead, const SuccessorChooser& next) {
  auto choose = [&](LaneIndex l) { return next ? next(l) : default_successor(map, l); };

  std::deque<LaneIndex> seq{lane};
  std::size_t anchor_idx = 0;
  for (double need = ahead + 1.0 - (map.lane(lane).length() - s); need > 0.0;) {
    const auto n = choose(seq.back());
    if (!n) break;
    seq.push_back(*n);
    need -= map.lane(*n).length();
  }
  for (double need = behind + 1.0 - s; need > 0.0;) {
    const auto& preds = map.predecessors(seq.front());
    if (preds.empty()) break;
    seq.push_front(preds.front());
    ++anchor_idx;
    need -= map.lane(preds.front()).length();
  }

  // Stitch whole lanes, remembering where each starts on the stitched curve.
  std::vector<Vec2> pts;
  std::vector<std::size_t> first_vertex;
  for (LaneIndex l : seq) {
    const auto lp = map.lane(l).centerline.points();
    std::size_t k = 0;
    if (!pts.empty() && norm(pts.back() - lp.front()) < 1e-9) k = 1;
    first_vertex.push_back(k == 1 ? pts.size() - 1 : pts.size());
    pts.insert(pts.end(), lp.begin() + static_cast<std::ptrdiff_t>(k), lp.end());
  }
  const Polyline full(pts);
  std::vector<double> lane_start(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) lane_start[i] = full.vertex_s(first_vertex[i]);
  const double anchor_full = lane_start[anchor_idx] + s;
  const double w0 = std::max(0.0, anchor_full - behind - 1.0);
  const double w1 = std::min(full.length(), anchor_full + ahead + 1.0);

  std::vector<Vec2> clipped{full.point_at(w0)};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double vs = full.vertex_s(i);
    if (vs > w0 && vs < w1 && norm(pts[i] - clipped.back()) > 1e-9) clipped.push_back(pts[i]);
  }
  const Vec2 end = full.point_at(w1);
  if (norm(end - clipped.back()) > 1e-9) clipped.push_back(end);

  ReferencePath path;
  path.line_ = Polyline(std::move(clipped));
  // Clipping keeps arc lengths, so pieces shift by w0.
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double a = lane_start[i] - w0;
    const double b = (i + 1 < seq.size() ? lane_start[i + 1] : full.length()) - w0;
    if (b <= 0.0 || a >= path.line_.length()) continue;
    Piece p;
    p.lane = seq[i];
    p.path_s0 = std::max(0.0, a);
    p.lane_s0 = p.path_s0 - a;
    p.path_s1 = std::min(path.line_.length(), b);
    std::tie(p.left_extent, p.right_extent) = road_extents(map, seq[i]);
    path.pieces_.push_back(p);
  }
  path.anchor_s_ = anchor_full - w0;
  path.anchor_segment_ = path.line_.segment_at(path.anchor_s_);
  return path;
}

const ReferencePath::Piece& ReferencePath::piece_at(double path_s) const {
  for (const auto& p : pieces_) {
    if (path_s < p.path_s1) return p;
  }
  return pieces_.back();
}

std::optional<std::pair<double, double>> ReferencePath::extents_over(double s0, double s1) const {
  if (s0 < 0.0 || s1 > line_.length()) return std::nullopt;
  double left = std::numeric_limits<double>::infinity();
  double right = left;
  for (const auto& p : pieces_) {
    if (p.path_s1 <= s0 || p.path_s0 >= s1) continue;
    left = std::min(left, p.left_extent);
    right = std::min(right, p.right_extent);
  }
  return std::make_pair(left, right);
}

std::pair<LaneIndex, double> advance_along(const RoadMap& map, LaneIndex lane, double s,
                                          double ds, const SuccessorChooser& next) {
  double target = s + ds;
  while (target > map.lane(lane).length()) {
    const auto n = next ? next(lane) : default_successor(map, lane);
    if (!n) return {lane, map.lane(lane).length()};
    target -= map.lane(lane).length();
    lane = *n;
  }
  return {lane, std::max(0.0, target)};
}

}  // namespace hbmp
