#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hbmp/geometry.hpp"
#include "hbmp/world.hpp"

namespace hbmp {

/// Picks the successor to follow when a path runs off the end of a lane.
using SuccessorChooser = std::function<std::optional<LaneIndex>(LaneIndex)>;

/// Default chooser: the straight connector if any, else the first successor.
std::optional<LaneIndex> default_successor(const RoadMap& map, LaneIndex lane);

/// A centerline stitched from consecutive lanes, giving one continuous
/// curvilinear frame around an anchor point.
class ReferencePath {
 public:
  struct Piece {
    LaneIndex lane = 0;
    double path_s0 = 0.0;   // path arc length where the lane starts
    double lane_s0 = 0.0;   // lane arc length at path_s0 (nonzero for a clipped first piece)
    double path_s1 = 0.0;
    double left_extent = 0.0;   // drivable lateral extent to the left of the centerline
    double right_extent = 0.0;  // ... and to the right (positive number)
  };

  /// Builds a path through (lane, s) covering at least `behind` metres back
  /// and `ahead` metres forward where the lane graph allows.
  static ReferencePath build(const RoadMap& map, LaneIndex lane, double s, double behind,
                             double ahead, const SuccessorChooser& next);

  [[nodiscard]] const Polyline& line() const { return line_; }
  [[nodiscard]] const std::vector<Piece>& pieces() const { return pieces_; }
  /// Path arc length of the anchor point.
  [[nodiscard]] double anchor_s() const { return anchor_s_; }
  [[nodiscard]] std::size_t anchor_segment() const { return anchor_segment_; }
  [[nodiscard]] const Piece& piece_at(double path_s) const;
  /// Smallest left/right drivable extents over pieces overlapping [s0, s1];
  /// nullopt when part of the interval lies beyond the path's ends.
  [[nodiscard]] std::optional<std::pair<double, double>> extents_over(double s0, double s1) const;

 private:
  Polyline line_;
  std::vector<Piece> pieces_;
  double anchor_s_ = 0.0;
  std::size_t anchor_segment_ = 0;
};

/// Lateral extents of the road around a lane: half its width plus the widths
/// of every neighbour on that side.
std::pair<double, double> road_extents(const RoadMap& map, LaneIndex lane);

/// Moves `ds` metres along the lane graph from (lane, s).
std::pair<LaneIndex, double> advance_along(const RoadMap& map, LaneIndex lane, double s,
                                          double ds, const SuccessorChooser& next);

}  // namespace hbmp
