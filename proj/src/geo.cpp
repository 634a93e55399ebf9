#include "coexist/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

#include "coexist/error.hpp"
#include "json.hpp"

namespace coexist {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.east_m * b.north_m - a.north_m * b.east_m; }
double dot(const Vec2& a, const Vec2& b) { return a.east_m * b.east_m + a.north_m * b.north_m; }
Vec2 sub(const Vec2& a, const Vec2& b) { return {a.east_m - b.east_m, a.north_m - b.north_m}; }
Vec2 horizontal(const EnuPoint& p) { return {p.east_m, p.north_m}; }

bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double v = cross(sub(q, p), sub(r, p));
    return (v > 0.0) - (v < 0.0);
  };
  auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.east_m, q.east_m) <= r.east_m && r.east_m <= std::max(p.east_m, q.east_m) &&
           std::min(p.north_m, q.north_m) <= r.north_m &&
           r.north_m <= std::max(p.north_m, q.north_m);
  };
  const int o1 = orient(a0, a1, b0);
  const int o2 = orient(a0, a1, b1);
  const int o3 = orient(b0, b1, a0);
  const int o4 = orient(b0, b1, a1);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a0, a1, b0)) return true;
  if (o2 == 0 && on_segment(a0, a1, b1)) return true;
  if (o3 == 0 && on_segment(b0, b1, a0)) return true;
  if (o4 == 0 && on_segment(b0, b1, a1)) return true;
  return false;
}

struct Box {
  double min_e, min_n, max_e, max_n;
};

Box bounds(std::span<const Vec2> ring) {
  Box box{ring[0].east_m, ring[0].north_m, ring[0].east_m, ring[0].north_m};
  for (const auto& v : ring) {
    box.min_e = std::min(box.min_e, v.east_m);
    box.max_e = std::max(box.max_e, v.east_m);
    box.min_n = std::min(box.min_n, v.north_m);
    box.max_n = std::max(box.max_n, v.north_m);
  }
  return box;
}

// Lexicographic order on endpoints so that (tx, rx) and (rx, tx) take the
// identical floating-point path.
bool endpoint_less(const EnuPoint& a, const EnuPoint& b) {
  if (a.east_m != b.east_m) return a.east_m < b.east_m;
  if (a.north_m != b.north_m) return a.north_m < b.north_m;
  return a.up_m < b.up_m;
}

}  // namespace

void GeoPoint::validate() const {
  if (!(latitude_deg >= -90.0 && latitude_deg <= 90.0))
    throw Error(ErrorCode::kInvalidArgument, "latitude out of range");
  if (!(longitude_deg >= -180.0 && longitude_deg <= 180.0))
    throw Error(ErrorCode::kInvalidArgument, "longitude out of range");
  if (!(height_m >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "height below ground");
}

EnuPoint to_enu(const GeoPoint& origin, const GeoPoint& p) {
  const double dlat = (p.latitude_deg - origin.latitude_deg) * kDegToRad;
  const double dlon = (p.longitude_deg - origin.longitude_deg) * kDegToRad;
  return {kEarthRadiusM * dlon * std::cos(origin.latitude_deg * kDegToRad),
          kEarthRadiusM * dlat, p.height_m - origin.height_m};
}

GeoPoint from_enu(const GeoPoint& origin, const EnuPoint& p) {
  const double lat = origin.latitude_deg + p.north_m / kEarthRadiusM * kRadToDeg;
  const double lon = origin.longitude_deg +
                     p.east_m / (kEarthRadiusM * std::cos(origin.latitude_deg * kDegToRad)) *
                         kRadToDeg;
  return {lat, lon, origin.height_m + p.up_m};
}

double distance_2d(const EnuPoint& a, const EnuPoint& b) {
  return std::hypot(b.east_m - a.east_m, b.north_m - a.north_m);
}

double distance_3d(const EnuPoint& a, const EnuPoint& b) {
  return std::hypot(b.east_m - a.east_m, b.north_m - a.north_m, b.up_m - a.up_m);
}

Direction angles_between(const EnuPoint& from, const EnuPoint& to) {
  const double de = to.east_m - from.east_m;
  const double dn = to.north_m - from.north_m;
  const double du = to.up_m - from.up_m;
  const double ground = std::hypot(de, dn);
  if (ground == 0.0 && du == 0.0)
    throw Error(ErrorCode::kInvalidArgument, "degenerate direction");
  double az = std::atan2(de, dn) * kRadToDeg;
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  return {az, std::atan2(du, ground) * kRadToDeg};
}

double wrap_azimuth_delta(double from_deg, double to_deg) {
  double d = std::fmod(to_deg - from_deg, 360.0);
  if (d < -180.0) d += 360.0;
  if (d >= 180.0) d -= 360.0;
  return d;
}

double angular_separation_deg(const Direction& a, const Direction& b) {
  // Haversine form; stays accurate near 0 where the arccos form loses digits.
  const double el1 = a.elevation_deg * kDegToRad;
  const double el2 = b.elevation_deg * kDegToRad;
  const double daz = (b.azimuth_deg - a.azimuth_deg) * kDegToRad;
  const double s1 = std::sin((el2 - el1) / 2.0);
  const double s2 = std::sin(daz / 2.0);
  const double h = s1 * s1 + std::cos(el1) * std::cos(el2) * s2 * s2;
  return 2.0 * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0))) * kRadToDeg;
}

void Building::validate() const {
  if (footprint.size() < 3)
    throw Error(ErrorCode::kInvalidArgument, "building " + id + ": footprint needs >= 3 vertices");
  if (!(height_m > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "building " + id + ": height must be positive");
  const std::size_t n = footprint.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(footprint[i], footprint[(i + 1) % n], footprint[j],
                             footprint[(j + 1) % n]))
        throw Error(ErrorCode::kInvalidArgument, "building " + id + ": footprint is not simple");
    }
  }
}

bool point_in_polygon(const Vec2& p, std::span<const Vec2> ring) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = ring[i];
    const Vec2& b = ring[j];
    if ((a.north_m > p.north_m) != (b.north_m > p.north_m)) {
      const double x =
          (b.east_m - a.east_m) * (p.north_m - a.north_m) / (b.north_m - a.north_m) + a.east_m;
      if (p.east_m < x) inside = !inside;
    }
  }
  return inside;
}

bool building_blocks(const Building& building, const EnuPoint& tx, const EnuPoint& rx) {
  const EnuPoint& p = endpoint_less(tx, rx) ? tx : rx;
  const EnuPoint& q = endpoint_less(tx, rx) ? rx : tx;
  const Vec2 p0 = horizontal(p);
  const Vec2 p1 = horizontal(q);
  const std::span<const Vec2> ring = building.footprint;

  const Box box = bounds(ring);
  if (std::max(p0.east_m, p1.east_m) < box.min_e || std::min(p0.east_m, p1.east_m) > box.max_e ||
      std::max(p0.north_m, p1.north_m) < box.min_n || std::min(p0.north_m, p1.north_m) > box.max_n)
    return false;
  if (point_in_polygon(p0, ring) || point_in_polygon(p1, ring)) return false;

  const Vec2 d = sub(p1, p0);
  const double len2 = dot(d, d);
  if (len2 == 0.0) return false;

  auto blocked_at = [&](double t) {
    return p.up_m + t * (q.up_m - p.up_m) < building.height_m;
  };

  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& e0 = ring[i];
    const Vec2& e1 = ring[(i + 1) % n];
    const Vec2 e = sub(e1, e0);
    const Vec2 w = sub(e0, p0);
    const double denom = cross(d, e);
    if (denom != 0.0) {
      const double t = cross(w, e) / denom;
      const double u = cross(w, d) / denom;
      if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0 && blocked_at(t)) return true;
    } else if (cross(w, d) == 0.0) {
      // Collinear edge: the overlap's extreme points bound the height range.
      double t0 = dot(w, d) / len2;
      double t1 = dot(sub(e1, p0), d) / len2;
      if (t0 > t1) std::swap(t0, t1);
      const double lo = std::max(t0, 0.0);
      const double hi = std::min(t1, 1.0);
      if (lo <= hi && (blocked_at(lo) || blocked_at(hi))) return true;
    }
  }
  return false;
}

SpatialIndex::SpatialIndex(std::span<const Building> buildings, double cell_size_m)
    : cell_size_m_(cell_size_m) {
  if (!(cell_size_m > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "spatial index cell size must be positive");
  if (buildings.empty()) return;

  Box all = bounds(buildings.front().footprint);
  std::vector<Box> boxes;
  boxes.reserve(buildings.size());
  for (const auto& b : buildings) {
    const Box box = bounds(b.footprint);
    boxes.push_back(box);
    all.min_e = std::min(all.min_e, box.min_e);
    all.min_n = std::min(all.min_n, box.min_n);
    all.max_e = std::max(all.max_e, box.max_e);
    all.max_n = std::max(all.max_n, box.max_n);
  }
  // Pad so rounding at the boundary never drops a building out of the grid.
  const double pad = 1e-6 * cell_size_m_ + 1e-9;
  min_east_ = all.min_e - pad;
  min_north_ = all.min_n - pad;
  columns_ = static_cast<std::size_t>(std::floor((all.max_e + pad - min_east_) / cell_size_m_)) + 1;
  rows_ = static_cast<std::size_t>(std::floor((all.max_n + pad - min_north_) / cell_size_m_)) + 1;
  cells_.assign(columns_ * rows_, {});

  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    const auto c0 = static_cast<std::size_t>(std::floor((b.min_e - pad - min_east_) / cell_size_m_));
    const auto c1 = std::min(
        columns_ - 1,
        static_cast<std::size_t>(std::floor((b.max_e + pad - min_east_) / cell_size_m_)));
    const auto r0 = static_cast<std::size_t>(std::floor((b.min_n - pad - min_north_) / cell_size_m_));
    const auto r1 = std::min(
        rows_ - 1, static_cast<std::size_t>(std::floor((b.max_n + pad - min_north_) / cell_size_m_)));
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c) cells_[r * columns_ + c].push_back(i);
  }
}

std::vector<std::size_t> SpatialIndex::candidates(const EnuPoint& a, const EnuPoint& b) const {
  std::vector<std::size_t> out;
  if (cells_.empty()) return out;

  const double eps = 1e-6 * cell_size_m_;
  const double ncols = static_cast<double>(columns_);
  const double nrows = static_cast<double>(rows_);
  const double xa = a.east_m - min_east_, ya = a.north_m - min_north_;
  const double xb = b.east_m - min_east_, yb = b.north_m - min_north_;
  const double xmin = std::min(xa, xb), xmax = std::max(xa, xb);

  const double col_lo = std::floor((xmin - eps) / cell_size_m_);
  const double col_hi = std::floor((xmax + eps) / cell_size_m_);
  if (col_hi < 0.0 || col_lo >= ncols) return out;
  const auto c_first = static_cast<std::size_t>(std::max(col_lo, 0.0));
  const auto c_last = static_cast<std::size_t>(std::min(col_hi, ncols - 1.0));

  const double dx = xb - xa;
  for (std::size_t c = c_first; c <= c_last; ++c) {
    double y0, y1;
    if (std::abs(dx) < eps) {
      y0 = std::min(ya, yb);
      y1 = std::max(ya, yb);
    } else {
      const double slab_lo = std::max(xmin, static_cast<double>(c) * cell_size_m_);
      const double slab_hi = std::min(xmax, static_cast<double>(c + 1) * cell_size_m_);
      const double ys = ya + (slab_lo - xa) / dx * (yb - ya);
      const double ye = ya + (slab_hi - xa) / dx * (yb - ya);
      y0 = std::min(ys, ye);
      y1 = std::max(ys, ye);
    }
    const double row_lo = std::floor((y0 - eps) / cell_size_m_);
    const double row_hi = std::floor((y1 + eps) / cell_size_m_);
    if (row_hi < 0.0 || row_lo >= nrows) continue;
    const auto r_first = static_cast<std::size_t>(std::max(row_lo, 0.0));
    const auto r_last = static_cast<std::size_t>(std::min(row_hi, nrows - 1.0));
    for (std::size_t r = r_first; r <= r_last; ++r) {
      const auto& ids = cell(c, r);
      out.insert(out.end(), ids.begin(), ids.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool is_los(const EnuPoint& tx, const EnuPoint& rx, const SpatialIndex& index,
            std::span<const Building> buildings) {
  for (std::size_t i : index.candidates(tx, rx)) {
    if (building_blocks(buildings[i], tx, rx)) return false;
  }
  return true;
}

namespace {

std::optional<double> numeric_property(const nlohmann::json& props, const char* key) {
  if (!props.is_object() || !props.contains(key)) return std::nullopt;
  const auto& v = props.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    // OSM tags heights as strings, sometimes with a unit suffix ("12 m").
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    const double parsed = std::strtod(s.c_str(), &end);
    if (end != s.c_str()) return parsed;
  }
  return std::nullopt;
}

std::vector<Vec2> parse_ring(const nlohmann::json& ring, const GeoPoint& origin,
                             const std::string& where) {
  if (!ring.is_array() || ring.size() < 3)
    throw Error(ErrorCode::kParse, where + ": polygon ring needs >= 3 positions");
  std::vector<Vec2> out;
  out.reserve(ring.size());
  for (const auto& pos : ring) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
      throw Error(ErrorCode::kParse, where + ": invalid position");
    const GeoPoint g{pos[1].get<double>(), pos[0].get<double>(), origin.height_m};
    const EnuPoint e = to_enu(origin, g);
    out.push_back({e.east_m, e.north_m});
  }
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  if (out.size() < 3) throw Error(ErrorCode::kParse, where + ": polygon ring needs >= 3 vertices");
  return out;
}

}  // namespace

BuildingLoadResult parse_buildings_geojson(const std::string& text, const GeoPoint& origin,
                                           double default_height_m) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("buildings GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array())
    throw Error(ErrorCode::kParse, "buildings GeoJSON: expected a FeatureCollection");

  BuildingLoadResult result;
  std::size_t index = 0;
  for (const auto& feature : doc["features"]) {
    std::string id;
    if (feature.contains("id") && feature["id"].is_string()) id = feature["id"].get<std::string>();
    else if (feature.contains("id") && feature["id"].is_number_integer())
      id = std::to_string(feature["id"].get<long long>());
    else id = "building-" + std::to_string(index);
    const std::string where = "feature " + std::to_string(index) + " (" + id + ")";
    ++index;

    if (!feature.is_object() || !feature.contains("geometry") || !feature["geometry"].is_object())
      throw Error(ErrorCode::kParse, where + ": missing geometry");
    const auto& geom = feature["geometry"];
    const std::string type = geom.value("type", "");
    const nlohmann::json props = feature.value("properties", nlohmann::json::object());

    double height = default_height_m;
    if (auto h = numeric_property(props, "height_m")) height = *h;
    else if (auto h2 = numeric_property(props, "height")) height = *h2;
    else result.warnings.push_back(where + ": no height, using default " +
                                   std::to_string(default_height_m) + " m");

    std::vector<nlohmann::json> polygons;
    if (type == "Polygon") polygons.push_back(geom.at("coordinates"));
    else if (type == "MultiPolygon")
      for (const auto& p : geom.at("coordinates")) polygons.push_back(p);
    else
      throw Error(ErrorCode::kParse, where + ": unsupported geometry type '" + type + "'");

    for (std::size_t k = 0; k < polygons.size(); ++k) {
      if (!polygons[k].is_array() || polygons[k].empty())
        throw Error(ErrorCode::kParse, where + ": empty polygon");
      Building b;
      b.id = polygons.size() == 1 ? id : id + "#" + std::to_string(k);
      b.footprint = parse_ring(polygons[k][0], origin, where);
      b.height_m = height;
      try {
        b.validate();
      } catch (const Error& e) {
        throw Error(ErrorCode::kParse, where + ": " + e.what());
      }
      result.buildings.push_back(std::move(b));
    }
  }
  return result;
}

BuildingLoadResult load_buildings_geojson(const std::filesystem::path& path,
                                          const GeoPoint& origin, double default_height_m) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_buildings_geojson(ss.str(), origin, default_height_m);
}

std::string buildings_to_geojson(std::span<const Building> buildings, const GeoPoint& origin) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& b : buildings) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& v : b.footprint) {
      const GeoPoint g = from_enu(origin, {v.east_m, v.north_m, 0.0});
      ring.push_back({g.longitude_deg, g.latitude_deg});
    }
    ring.push_back(ring.front());
    features.push_back({{"type", "Feature"},
                        {"id", b.id},
                        {"properties", {{"height_m", b.height_m}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
  }
  return nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(1);
}

}  // namespace coexist
