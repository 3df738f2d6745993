#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <vector>

#include "hbmp/path.hpp"
#include "hbmp/sim.hpp"

namespace hbmp {

enum class GridFrame : std::uint8_t { kVehicleCentric, kLaneCurvilinear };
const char* to_string(GridFrame f);

struct GridConfig {
  double lon_min = -8.0;
  double lon_max = 24.0;
  double lat_min = -4.0;
  double lat_max = 4.0;
  double res_lon = 0.5;
  double res_lat = 0.5;

  [[nodiscard]] int rows() const;  // longitudinal, row 0 rearmost
  [[nodiscard]] int cols() const;  // lateral, column 0 rightmost
  /// Unclipped cell indices of a point in grid coordinates.
  [[nodiscard]] long row_of(double lon) const;
  [[nodiscard]] long col_of(double lat) const;
};

/// Binary occupancy grid. `agents` and `offroad` are kept as separate
/// layers; `cells` is their union and is what the policy sees.
struct OccupancyGrid {
  GridFrame frame = GridFrame::kLaneCurvilinear;
  GridConfig config;
  std::vector<std::uint8_t> agents;
  std::vector<std::uint8_t> offroad;
  std::vector<std::uint8_t> cells;

  [[nodiscard]] int rows() const { return config.rows(); }
  [[nodiscard]] int cols() const { return config.cols(); }
  [[nodiscard]] std::uint8_t at(int r, int c) const { return cells[r * cols() + c]; }
  [[nodiscard]] std::uint8_t agent_at(int r, int c) const { return agents[r * cols() + c]; }
  [[nodiscard]] std::size_t occupied() const;
};

/// Footprint sampling lattice at (at most) 1 cm pitch. Points (i, j) for
/// i in [0, nx], j in [0, ny] cover the closed rectangle.
struct FootprintLattice {
  explicit FootprintLattice(const Footprint& f, double pitch = 0.01);
  [[nodiscard]] Vec2 point(int i, int j) const;

  Footprint footprint;
  int nx = 0;
  int ny = 0;

 private:
  Vec2 origin_, du_, dv_;
};

/// Reference path used for the curvilinear grid around the ego.
ReferencePath grid_path(const WorldState& world, const GridConfig& config);

/// Rasterises agents and non-drivable area around the ego.
/// lane_curvilinear throws ProjectionError when the ego is outside the
/// capture range of its lane.
OccupancyGrid build_grid(const WorldState& world, GridFrame frame,
                         const GridConfig& config = GridConfig{});

/// Curvilinear grid on a path from `grid_path`, for callers that also need
/// the path itself.
OccupancyGrid build_grid_on(const WorldState& world, const ReferencePath& path,
                            const GridConfig& config = GridConfig{});

/// Maps world poses into a grid's (lon, lat, heading) coordinates.
class GridMapper {
 public:
  GridMapper(const WorldState& world, GridFrame frame, const ReferencePath* path);
  /// Grid coordinates of a pose; heading is relative to the grid's x axis
  /// at that point.
  [[nodiscard]] Pose2 to_grid(const Pose2& p) const;

 private:
  GridFrame frame_;
  const ReferencePath* path_;
  Pose2 ego_;
  mutable std::size_t hint_;
};

/// Road profile R_t, flattened in the order of `values()`.
struct RoadProfile {
  static constexpr std::size_t kSize = 16;

  double e_l = 0.0;
  double e_r = 0.0;
  std::array<double, 3> alpha_l{};  // left, straight, right bits
  std::array<double, 3> alpha_c{};
  std::array<double, 3> alpha_r{};
  double l_g = 0.0;
  double l_y = 0.0;
  double l_r = 0.0;
  double d_s = 1.0;
  double delta_v = 0.0;

  [[nodiscard]] std::array<double, kSize> values() const;
  static const std::array<const char*, kSize>& names();
};

/// Direction mask of a lane as three 0/1 scalars; connectors report their
/// own maneuver.
std::array<double, 3> direction_bits(const Lane& lane);

RoadProfile build_profile(const WorldState& world);

struct Observation {
  OccupancyGrid grid;
  RoadProfile profile;
};

Observation observe(const WorldState& world, GridFrame frame,
                    const GridConfig& config = GridConfig{});

/// Text rows of 0/1, row 0 (rearmost) first.
void dump_grid(std::ostream& out, const OccupancyGrid& grid);
/// Header line plus one CSV row of the profile scalars.
void dump_profile(std::ostream& out, const RoadProfile& profile);

}  // namespace hbmp
