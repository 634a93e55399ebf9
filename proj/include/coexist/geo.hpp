#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace coexist {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct GeoPoint {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double height_m = 0.0;  // above local ground

  // Throws Error(kInvalidArgument) when out of the WGS84 range or below ground.
  void validate() const;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Local tangent-plane coordinates. The frame origin is carried by whoever owns
// the conversion (see EnuFrame); an EnuPoint alone is just three metres.
struct EnuPoint {
  double east_m = 0.0;
  double north_m = 0.0;
  double up_m = 0.0;

  friend bool operator==(const EnuPoint&, const EnuPoint&) = default;
};

struct Vec2 {
  double east_m = 0.0;
  double north_m = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

// Equirectangular small-area projection around `origin`.
EnuPoint to_enu(const GeoPoint& origin, const GeoPoint& p);
GeoPoint from_enu(const GeoPoint& origin, const EnuPoint& p);

class EnuFrame {
 public:
  explicit EnuFrame(GeoPoint origin) : origin_(origin) {}

  const GeoPoint& origin() const noexcept { return origin_; }
  EnuPoint to_enu(const GeoPoint& p) const { return coexist::to_enu(origin_, p); }
  GeoPoint to_geo(const EnuPoint& p) const { return coexist::from_enu(origin_, p); }

 private:
  GeoPoint origin_;
};

double distance_2d(const EnuPoint& a, const EnuPoint& b);
double distance_3d(const EnuPoint& a, const EnuPoint& b);

struct Direction {
  double azimuth_deg = 0.0;    // [0, 360), clockwise from north
  double elevation_deg = 0.0;  // [-90, 90], positive upwards
};

// Throws Error(kInvalidArgument, "degenerate direction") for coincident points.
Direction angles_between(const EnuPoint& from, const EnuPoint& to);

// Signed azimuth difference `to - from` wrapped into [-180, 180).
double wrap_azimuth_delta(double from_deg, double to_deg);

// Great-circle angle between two pointing directions, degrees in [0, 180].
double angular_separation_deg(const Direction& a, const Direction& b);

struct Building {
  std::string id;
  std::vector<Vec2> footprint;  // open ring, >= 3 vertices
  double height_m = 0.0;

  // Checks vertex count, positive height and that the ring is simple.
  void validate() const;
};

bool point_in_polygon(const Vec2& p, std::span<const Vec2> ring);

// Exact 2.5D occlusion of the tx-rx segment by one building. A building whose
// footprint contains either endpoint never blocks (antennas sit on or above it).
bool building_blocks(const Building& building, const EnuPoint& tx, const EnuPoint& rx);

// Uniform grid over the buildings' bounding box; each cell lists every building
// whose footprint bounding box overlaps it.
class SpatialIndex {
 public:
  static constexpr double kDefaultCellSizeM = 100.0;

  SpatialIndex() = default;
  explicit SpatialIndex(std::span<const Building> buildings,
                        double cell_size_m = kDefaultCellSizeM);

  // Superset of the buildings whose footprint the segment's horizontal
  // projection touches; sorted, no duplicates.
  std::vector<std::size_t> candidates(const EnuPoint& a, const EnuPoint& b) const;

  double cell_size_m() const noexcept { return cell_size_m_; }
  std::size_t columns() const noexcept { return columns_; }
  std::size_t rows() const noexcept { return rows_; }

 private:
  const std::vector<std::size_t>& cell(std::size_t col, std::size_t row) const {
    return cells_[row * columns_ + col];
  }

  double cell_size_m_ = kDefaultCellSizeM;
  double min_east_ = 0.0;
  double min_north_ = 0.0;
  std::size_t columns_ = 0;
  std::size_t rows_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

bool is_los(const EnuPoint& tx, const EnuPoint& rx, const SpatialIndex& index,
            std::span<const Building> buildings);

// GeoJSON FeatureCollection of Polygon (outer ring only) or MultiPolygon
// features. Height comes from `height_m`, then `height`; missing heights get
// `default_height_m` and a warning line.
struct BuildingLoadResult {
  std::vector<Building> buildings;
  std::vector<std::string> warnings;
};

inline constexpr double kDefaultBuildingHeightM = 15.0;

BuildingLoadResult parse_buildings_geojson(const std::string& text, const GeoPoint& origin,
                                           double default_height_m = kDefaultBuildingHeightM);
BuildingLoadResult load_buildings_geojson(const std::filesystem::path& path,
                                          const GeoPoint& origin,
                                          double default_height_m = kDefaultBuildingHeightM);
std::string buildings_to_geojson(std::span<const Building> buildings, const GeoPoint& origin);

}  // namespace coexist
